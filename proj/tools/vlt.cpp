#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vlt/checkpoint.hpp"
#include "vlt/data.hpp"
#include "vlt/gradcheck.hpp"
#include "vlt/metrics.hpp"
#include "vlt/model.hpp"
#include "vlt/train.hpp"

namespace {

struct ConfigArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_file, "plain-text key=value configuration file");
    cmd->add_option("--set", args.overrides, "override a single key, e.g. --set model.nq=8")->take_all();
    cmd->add_option("--seed", args.seed, "random seed (overrides config)")->each([&args](const std::string&) {
        args.seed_set = true;
    });
}

vlt::Config make_config(const ConfigArgs& args) {
    vlt::Config cfg;
    if (!args.config_file.empty()) cfg.load_file(args.config_file);
    for (const std::string& kv : args.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

vlt::Model build_model(const vlt::Config& cfg, const vlt::Dataset& ds, const std::string& checkpoint) {
    vlt::Model model(cfg, ds.vocab().size(), ds.image_h(), ds.image_w());
    if (!checkpoint.empty()) vlt::load_checkpoint(checkpoint, model.params());
    return model;
}

void print_report(std::ostream& os, const vlt::EvalReport& report) { os << vlt::format_report(report); }

std::vector<unsigned char> probability_bytes(const vlt::Tensor& logits) {
    std::vector<unsigned char> bytes(logits.numel());
    const double* p = logits.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double prob = p[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-p[i])) : std::exp(p[i]) / (1.0 + std::exp(p[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(prob * 255.0));
    }
    return bytes;
}

int run_ablate(const std::string& sweep, const vlt::Config& base, const vlt::Dataset& train_ds,
               const vlt::Dataset& eval_ds, std::ostream& os) {
    struct Setting {
        std::string label;
        vlt::Config cfg;
    };
    std::vector<Setting> settings;
    if (sweep == "nq") {
        for (int nq : {1, 2, 4, 8, 16, 32}) {
            vlt::Config c = base;
            c.nq = nq;
            settings.push_back({"nq=" + std::to_string(nq), c});
        }
    } else if (sweep == "fusion") {
        for (const char* kind : {"sdf", "tile", "tile_conv4"}) {
            vlt::Config c = base;
            c.set("fusion.kind", kind);
            settings.push_back({std::string("fusion=") + kind, c});
        }
    } else if (sweep == "query_kind") {
        for (const char* kind : {"qgm", "learnt", "ft"}) {
            vlt::Config c = base;
            c.set("query.kind", kind);
            c.mcl_lambda = 0.0;  // masking needs qgm attention; keep the comparison uniform
            settings.push_back({std::string("query=") + kind, c});
        }
    } else if (sweep == "mcl") {
        vlt::Config none = base;
        none.mcl_lambda = 0.0;
        vlt::Config cl = base;
        cl.mcl_lambda = cl.mcl_lambda > 0.0 ? cl.mcl_lambda : 0.1;
        cl.mcl_mask_words = false;
        vlt::Config mcl = base;
        mcl.mcl_lambda = mcl.mcl_lambda > 0.0 ? mcl.mcl_lambda : 0.1;
        mcl.mcl_mask_words = true;
        settings.push_back({"mcl=none", none});
        settings.push_back({"mcl=cl", cl});
        settings.push_back({"mcl=mcl", mcl});
    } else {
        std::cerr << "unknown sweep '" << sweep << "' (expected nq|fusion|query_kind|mcl)\n";
        return 2;
    }

    os << "# sweep " << sweep << '\n';
    os << "setting\tiou";
    for (double t : vlt::default_thresholds()) os << "\tpr@" << t;
    os << '\n';
    for (const Setting& s : settings) {
        vlt::Model model(s.cfg, train_ds.vocab().size(), train_ds.image_h(), train_ds.image_w());
        std::ofstream devnull("/dev/null");
        vlt::train_loop(model, train_ds, s.cfg, "/tmp/vlt_ablate_ckpt.vltw", devnull);
        const vlt::EvalReport report = vlt::evaluate(model, eval_ds, s.cfg, false);
        os << s.label << '\t' << report.mean_iou;
        for (double p : report.precision) os << '\t' << p;
        os << '\n';
        os.flush();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"referring-segmentation trainer and evaluation harness"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "write a synthetic referring-segmentation dataset");
    std::string gen_out = "dataset";
    int gen_scenes = 50;
    std::uint64_t gen_seed = 1;
    std::string gen_templates = "mixed";
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--scenes", gen_scenes, "number of scenes");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--templates", gen_templates, "template subset: mixed|rich|posfree");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    ConfigArgs train_cfg_args;
    std::string train_dataset, train_out = "model.vltw", train_log;
    add_config_options(train, train_cfg_args);
    train->add_option("--dataset", train_dataset, "dataset directory")->required();
    train->add_option("--out", train_out, "checkpoint path");
    train->add_option("--log", train_log, "training log file (default stdout)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a model");
    ConfigArgs eval_cfg_args;
    std::string eval_dataset, eval_checkpoint, eval_out;
    bool mask_eval = false;
    add_config_options(eval, eval_cfg_args);
    eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to load (fresh weights when omitted)");
    eval->add_option("--out", eval_out, "report file (default stdout)");
    eval->add_flag("--mask-eval", mask_eval, "erase the most important word of every sample before prediction");

    // infer
    auto* infer = app.add_subcommand("infer", "run one image + expression and write mask outputs");
    ConfigArgs infer_cfg_args;
    std::string infer_image, infer_text, infer_vocab, infer_checkpoint, infer_out = "prediction";
    bool infer_raw = false;
    add_config_options(infer, infer_cfg_args);
    infer->add_option("--image", infer_image, "input PPM image")->required();
    infer->add_option("--text", infer_text, "referring expression")->required();
    infer->add_option("--vocab", infer_vocab, "vocabulary file")->required();
    infer->add_option("--checkpoint", infer_checkpoint, "checkpoint to load");
    infer->add_option("--out", infer_out, "output prefix (<out>.pgm probability map, <out>.pbm mask)");
    infer->add_flag("--raw-logits", infer_raw, "also write <out>.raw float32 logits with a text header");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and evaluate a named sweep");
    ConfigArgs ablate_cfg_args;
    std::string ablate_sweep, ablate_dataset, ablate_eval_dataset, ablate_out;
    add_config_options(ablate, ablate_cfg_args);
    ablate->add_option("sweep", ablate_sweep, "nq|fusion|query_kind|mcl")->required();
    ablate->add_option("--dataset", ablate_dataset, "training dataset directory")->required();
    ablate->add_option("--eval-dataset", ablate_eval_dataset, "evaluation dataset (defaults to --dataset)");
    ablate->add_option("--out", ablate_out, "results table file (default stdout)");

    // dump-attention
    auto* dump = app.add_subcommand("dump-attention", "write A_qd and per-query spatial maps for one sample");
    ConfigArgs dump_cfg_args;
    std::string dump_dataset, dump_checkpoint, dump_out = "attention";
    int dump_index = 0;
    add_config_options(dump, dump_cfg_args);
    dump->add_option("--dataset", dump_dataset, "dataset directory")->required();
    dump->add_option("--checkpoint", dump_checkpoint, "checkpoint to load");
    dump->add_option("--index", dump_index, "sample index (id order)");
    dump->add_option("--out", dump_out, "output directory");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification of the full model");
    std::uint64_t gc_seed = 1;
    gc->add_option("--seed", gc_seed, "seed for the check instance");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            vlt::generate_dataset(gen_out, gen_scenes, gen_seed, vlt::template_mode_from_string(gen_templates));
            std::cout << "wrote " << gen_scenes << " scenes to " << gen_out << '\n';
            return 0;
        }
        if (train->parsed()) {
            const vlt::Config cfg = make_config(train_cfg_args);
            const vlt::Dataset ds = vlt::Dataset::load(train_dataset);
            vlt::Model model(cfg, ds.vocab().size(), ds.image_h(), ds.image_w());
            if (train_log.empty()) {
                vlt::train_loop(model, ds, cfg, train_out, std::cout);
            } else {
                std::ofstream log(train_log, std::ios::trunc);
                if (!log) throw std::runtime_error("cannot open log file '" + train_log + "'");
                vlt::train_loop(model, ds, cfg, train_out, log);
            }
            std::cout << "checkpoint written to " << train_out << '\n';
            return 0;
        }
        if (eval->parsed()) {
            const vlt::Config cfg = make_config(eval_cfg_args);
            const vlt::Dataset ds = vlt::Dataset::load(eval_dataset);
            const vlt::Model model = build_model(cfg, ds, eval_checkpoint);
            const vlt::EvalReport report = vlt::evaluate(model, ds, cfg, mask_eval);
            if (eval_out.empty()) {
                print_report(std::cout, report);
            } else {
                vlt::save_report(eval_out, report);
            }
            return 0;
        }
        if (infer->parsed()) {
            const vlt::Config cfg = make_config(infer_cfg_args);
            const vlt::Vocabulary vocab = vlt::Vocabulary::load(infer_vocab);
            const vlt::RgbImage img = vlt::read_ppm(infer_image);
            vlt::Model model(cfg, vocab.size(), img.h, img.w);
            if (!infer_checkpoint.empty()) vlt::load_checkpoint(infer_checkpoint, model.params());
            const std::vector<int> tokens = vocab.encode(infer_text);
            if (tokens.empty()) throw std::runtime_error("expression contains no tokens");
            const vlt::ModelOutput out = model.forward(vlt::image_to_tensor(img), tokens);
            vlt::write_pgm(infer_out + ".pgm", out.logits.dim(0), out.logits.dim(1), probability_bytes(out.logits));
            vlt::ByteMask mask;
            mask.h = out.logits.dim(0);
            mask.w = out.logits.dim(1);
            mask.pixels = vlt::binarize_logits(out.logits, cfg.mask_threshold);
            vlt::write_pbm(infer_out + ".pbm", mask);
            if (infer_raw) vlt::write_raw_float32(infer_out + ".raw", out.logits);
            std::cout << "wrote " << infer_out << ".pgm and " << infer_out << ".pbm\n";
            return 0;
        }
        if (ablate->parsed()) {
            const vlt::Config cfg = make_config(ablate_cfg_args);
            const vlt::Dataset train_ds = vlt::Dataset::load(ablate_dataset);
            const vlt::Dataset eval_ds =
                ablate_eval_dataset.empty() ? vlt::Dataset::load(ablate_dataset) : vlt::Dataset::load(ablate_eval_dataset);
            if (ablate_out.empty()) return run_ablate(ablate_sweep, cfg, train_ds, eval_ds, std::cout);
            std::ofstream os(ablate_out, std::ios::trunc);
            if (!os) throw std::runtime_error("cannot open '" + ablate_out + "'");
            return run_ablate(ablate_sweep, cfg, train_ds, eval_ds, os);
        }
        if (dump->parsed()) {
            const vlt::Config cfg = make_config(dump_cfg_args);
            if (cfg.query_kind != vlt::QueryKind::Qgm) throw std::runtime_error("dump-attention requires query.kind=qgm");
            const vlt::Dataset ds = vlt::Dataset::load(dump_dataset);
            if (dump_index < 0 || dump_index >= static_cast<int>(ds.size())) {
                throw std::runtime_error("sample index out of range");
            }
            const vlt::Model model = build_model(cfg, ds, dump_checkpoint);
            const vlt::DataSample& s = ds.samples()[static_cast<std::size_t>(dump_index)];
            const vlt::ModelOutput out = model.forward(ds.image(s), s.token_ids);

            std::filesystem::create_directories(dump_out);
            std::ofstream txt(std::filesystem::path(dump_out) / "a_qd.txt", std::ios::trunc);
            txt << "# expression: " << s.text << '\n';
            for (int q = 0; q < out.a_qd.dim(0); ++q) {
                for (int t = 0; t < out.a_qd.dim(1); ++t) {
                    if (t) txt << '\t';
                    txt << out.a_qd.at({q, t});
                }
                txt << '\n';
            }
            const int fh = model.feature_h(), fw = model.feature_w();
            for (int q = 0; q < out.f_vq.dim(0); ++q) {
                double lo = out.f_vq.at({q, 0}), hi = lo;
                for (int i = 0; i < fh * fw; ++i) {
                    lo = std::min(lo, out.f_vq.at({q, i}));
                    hi = std::max(hi, out.f_vq.at({q, i}));
                }
                const double span = hi > lo ? hi - lo : 1.0;
                std::vector<unsigned char> gray(static_cast<std::size_t>(fh) * fw);
                for (int i = 0; i < fh * fw; ++i) {
                    gray[static_cast<std::size_t>(i)] =
                        static_cast<unsigned char>(std::lround((out.f_vq.at({q, i}) - lo) / span * 255.0));
                }
                vlt::write_pgm((std::filesystem::path(dump_out) / ("query_" + std::to_string(q) + ".pgm")).string(),
                               fh, fw, gray);
            }
            std::cout << "wrote attention dumps to " << dump_out << '\n';
            return 0;
        }
        if (gc->parsed()) {
            const vlt::GradCheckResult res = vlt::run_model_grad_check(gc_seed);
            const double ratio = res.total ? static_cast<double>(res.rel_pass) / static_cast<double>(res.total) : 0.0;
            std::cout << "checked " << res.total << " parameter elements; " << res.rel_pass
                      << " within relative tolerance (" << ratio * 100.0 << "%), max rel err " << res.max_rel_err
                      << ", worst abs err among failures " << res.max_abs_err_of_failures << '\n';
            for (const std::string& f : res.failures) std::cout << "  " << f << '\n';
            const bool ok = res.pass(0.99, 1e-6);
            std::cout << (ok ? "PASS" : "FAIL") << '\n';
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
