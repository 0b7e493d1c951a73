// trg: experiment runner for the temporal reasoning graph models.
// Subcommands: gen-data, train, eval, gradcheck, ablate, sweep-heads,
// inspect-adjacency, plot.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "trg/checkpoint.hpp"
#include "trg/config.hpp"
#include "trg/csv.hpp"
#include "trg/gradcheck.hpp"
#include "trg/svg.hpp"
#include "trg/trainer.hpp"

namespace fs = std::filesystem;
using namespace trg;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<std::string> dataset;
    bool dump_config = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "run configuration file (flat JSON object)");
    cmd->add_option("--seed", f.seed, "root seed override");
    cmd->add_option("--out", f.out_dir, "output directory override");
    cmd->add_option("--workers", f.workers, "data-generation worker cap (1 = bit-deterministic)");
    cmd->add_option("--dataset", f.dataset, "TRGD dataset path override");
    cmd->add_flag("--dump-config", f.dump_config, "print the effective config and exit");
}

// defaults <- config file <- command-line overrides
RunConfig effective_config(const CommonFlags& f) {
    RunConfig cfg = f.config_path.empty() ? RunConfig{} : load_run_config(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.workers) cfg.workers = *f.workers;
    if (f.dataset) cfg.dataset = *f.dataset;
    cfg.validate();
    return cfg;
}

// Returns true when the command should stop after dumping.
bool maybe_dump(const CommonFlags& f, const RunConfig& cfg) {
    if (!f.dump_config) return false;
    std::cout << dump_run_config(cfg);
    return true;
}

std::string dataset_path(const RunConfig& cfg) {
    if (!cfg.dataset.empty()) return cfg.dataset;
    return (fs::path(cfg.out_dir) / "dataset.trgd").string();
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

Dataset load_dataset_checked(const RunConfig& cfg) {
    const std::string path = dataset_path(cfg);
    if (!fs::exists(path))
        throw IoError("dataset '" + path + "' does not exist (run gen-data first)");
    return read_dataset(path);
}

TrainResult train_once(const RunConfig& cfg, const Dataset& ds, Model<float>& model,
                       bool verbose) {
    return train(model, ds, cfg.train_options(), verbose ? &std::cerr : nullptr);
}

int cmd_gen_data(const CommonFlags& flags) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    ensure_out_dir(cfg);
    auto ds = generate(cfg.grammar(), cfg.train_samples + cfg.val_samples, cfg.seed, cfg.workers);
    const std::string path = dataset_path(cfg);
    write_dataset(ds, path);
    std::map<uint32_t, int> counts;
    for (const auto& s : ds.samples) counts[s.label]++;
    std::cout << "wrote " << path << ": " << ds.samples.size() << " samples, "
              << ds.class_count << (ds.label_mode == LabelMode::Multi ? " label columns" : " classes")
              << "\n";
    for (const auto& [label, n] : counts)
        std::cout << "  class " << label << ": " << n << " samples\n";
    return 0;
}

int cmd_train(const CommonFlags& flags, bool verbose) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    ensure_out_dir(cfg);
    auto ds = load_dataset_checked(cfg);
    Model<float> model(cfg.model_config(), cfg.seed);
    auto result = train_once(cfg, ds, model, verbose);
    const auto metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    write_metrics_csv(metrics_path, result.rows);
    const auto ckpt_path = (fs::path(cfg.out_dir) / "model.trgw").string();
    save_checkpoint(model, ckpt_path);
    std::cout << "wrote " << metrics_path << " and " << ckpt_path << "\n";
    std::cout << "best val top1 " << result.best_val_top1 << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& ckpt) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    Model<float> model = load_checkpoint(ckpt);
    auto ds = load_dataset_checked(cfg);
    std::vector<int> ids(ds.samples.size());
    std::iota(ids.begin(), ids.end(), 0);
    auto m = evaluate(model, ds, ids, cfg.train_options().sampling, cfg.stride, cfg.eval_clips);
    std::cout << "loss " << m.loss << " top1 " << m.top1 << " top5 " << m.top5;
    if (m.map) std::cout << " map " << *m.map;
    std::cout << "\n";
    return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    GradCheckOptions opt;  // the reference T=4, C=3, H=W=2, N=2 instance
    opt.seed = cfg.seed;
    auto report = run_gradcheck(opt);
    std::cout << report.to_string();
    return report.passed ? 0 : 1;
}

int cmd_ablate(const CommonFlags& flags, bool verbose) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    ensure_out_dir(cfg);
    auto ds = load_dataset_checked(cfg);
    std::string csv = "variant,top1,top5\n";
    char buf[96];
    for (const std::string variant : {"avgpool", "graph_concat", "graph_elem_avg", "full"}) {
        RunConfig vcfg = cfg;
        vcfg.variant = variant;
        Model<float> model(vcfg.model_config(), vcfg.seed);
        auto result = train_once(vcfg, ds, model, verbose);
        double top1 = 0, top5 = 0;
        for (const auto& row : result.rows)
            if (row.split == "val") {
                top1 = row.top1;  // final-epoch values
                top5 = row.top5;
            }
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", variant.c_str(), top1, top5);
        csv += buf;
        std::cout << "variant " << variant << " final val top1 " << top1 << "\n";
    }
    const auto path = (fs::path(cfg.out_dir) / "ablate.csv").string();
    write_text_file(path, csv);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_sweep_heads(const CommonFlags& flags, std::vector<int> heads, bool verbose) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    ensure_out_dir(cfg);
    if (heads.empty()) heads = {1, 2, 3, 4, 6, 8};
    auto ds = load_dataset_checked(cfg);
    std::string csv = "heads,top1\n";
    char buf[64];
    for (int n : heads) {
        RunConfig vcfg = cfg;
        vcfg.variant = "full";
        vcfg.heads = n;
        Model<float> model(vcfg.model_config(), vcfg.seed);
        auto result = train_once(vcfg, ds, model, verbose);
        double top1 = 0;
        for (const auto& row : result.rows)
            if (row.split == "val") top1 = row.top1;
        std::snprintf(buf, sizeof(buf), "%d,%.6f\n", n, top1);
        csv += buf;
        std::cout << "heads " << n << " final val top1 " << top1 << "\n";
    }
    const auto path = (fs::path(cfg.out_dir) / "sweep.csv").string();
    write_text_file(path, csv);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_inspect_adjacency(const CommonFlags& flags, const std::string& ckpt, int sample_index) {
    RunConfig cfg = effective_config(flags);
    if (maybe_dump(flags, cfg)) return 0;
    ensure_out_dir(cfg);
    Model<float> model = load_checkpoint(ckpt);
    auto ds = load_dataset_checked(cfg);
    if (sample_index < 0 || sample_index >= static_cast<int>(ds.samples.size()))
        throw ContractError("sample index " + std::to_string(sample_index) + " out of range [0, " +
                            std::to_string(ds.samples.size()) + ")");
    const auto& cfg_m = model.config();
    auto idx = sample_indices(cfg.train_options().sampling, ds.raw_frames, cfg_m.frames, cfg.stride,
                              /*train=*/false, nullptr);
    auto frames = gather_frames(ds, ds.samples[sample_index], idx);
    Tape<float> tape;
    ParamBinder<float> bind(tape, false);
    TrgInspection inspect;
    model.forward(bind, frames, BnMode::Eval, &inspect);
    if (inspect.adjacency.empty())
        throw ConfigError("inspect-adjacency: the checkpoint's variant has no temporal graph");
    for (size_t k = 0; k < inspect.adjacency.size(); ++k) {
        const auto path =
            (fs::path(cfg.out_dir) / ("adjacency_head" + std::to_string(k) + ".csv")).string();
        write_adjacency_csv(inspect.adjacency[k], cfg_m.frames, path);
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_path, std::string title) {
    auto table = read_csv(csv_path);
    auto series = series_from_table(table, csv_path);
    if (title.empty()) title = fs::path(csv_path).stem().string();
    const std::string svg = render_line_chart(series, table.header[0], title);
    write_text_file(out_path, svg);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal reasoning graph experiment runner"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags remain valid after the subcommand name

    CommonFlags flags;
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic TRGD dataset");
    add_common(gen, flags);

    auto* tr = app.add_subcommand("train", "train a model, write metrics.csv and model.trgw");
    add_common(tr, flags);

    std::string ckpt;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common(ev, flags);
    ev->add_option("--checkpoint", ckpt, "TRGW checkpoint")->required();

    auto* gc = app.add_subcommand("gradcheck",
                                  "finite-difference check of the temporal layer backward pass");
    add_common(gc, flags);

    auto* ab = app.add_subcommand("ablate", "train all four variants with identical seeds");
    add_common(ab, flags);

    std::vector<int> head_list;
    auto* sw = app.add_subcommand("sweep-heads", "train the full variant across head counts");
    add_common(sw, flags);
    sw->add_option("--heads", head_list, "head counts to sweep (default 1 2 3 4 6 8)");

    int sample_index = 0;
    auto* ia = app.add_subcommand("inspect-adjacency",
                                  "export per-head adjacency matrices for one sample");
    add_common(ia, flags);
    ia->add_option("--checkpoint", ckpt, "TRGW checkpoint")->required();
    ia->add_option("--sample", sample_index, "sample index (default 0)");

    std::string csv_path, plot_out, plot_title;
    auto* pl = app.add_subcommand("plot", "render a CSV produced by this tool as an SVG chart");
    pl->add_option("--csv", csv_path, "input CSV")->required();
    pl->add_option("--out", plot_out, "output SVG path")->required();
    pl->add_option("--title", plot_title, "chart title");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(flags);
        if (tr->parsed()) return cmd_train(flags, verbose);
        if (ev->parsed()) return cmd_eval(flags, ckpt);
        if (gc->parsed()) return cmd_gradcheck(flags);
        if (ab->parsed()) return cmd_ablate(flags, verbose);
        if (sw->parsed()) return cmd_sweep_heads(flags, head_list, verbose);
        if (ia->parsed()) return cmd_inspect_adjacency(flags, ckpt, sample_index);
        if (pl->parsed()) return cmd_plot(csv_path, plot_out, plot_title);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
