// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "img/data.hpp"
#include "img/sweep.hpp"
#include "img/trainer.hpp"

namespace fs = std::filesystem;
using namespace img;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

void apply_seed_env(ModelConfig& cfg) {
    if (const char* env = std::getenv("IMG_SEED")) {
        cfg.seed = std::stol(env);
        std::cerr << "IMG_SEED override: seed=" << cfg.seed << "\n";
    }
}

std::string dataset_dir(const std::string& root, const std::string& split) {
    const fs::path sub = fs::path(root) / split;
    return fs::exists(sub / "annotations.jsonl") ? sub.string() : root;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
    SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : SyntheticSpec::load(spec_path);
    spec.validate();
    auto samples = generate_synthetic_dataset(spec);
    const int n_train = synthetic_train_count(spec);
    std::vector<FeatureBundle> train(samples.begin(), samples.begin() + n_train);
    std::vector<FeatureBundle> test(samples.begin() + n_train, samples.end());
    write_dataset((fs::path(out_dir) / "train").string(), train);
    write_dataset((fs::path(out_dir) / "test").string(), test);
    std::ofstream((fs::path(out_dir) / "synthetic_spec.json").string()) << spec.to_json() << "\n";
    std::cout << "wrote " << train.size() << " train / " << test.size() << " test samples to "
              << out_dir << "\n";
    return 0;
}

int run_train(const std::string& cfg_path, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
    std::unique_ptr<Trainer> trainer;
    ModelConfig cfg;
    if (!resume.empty()) {
        Checkpoint ck = read_checkpoint(resume);
        trainer = std::make_unique<Trainer>(ck);
        cfg = ck.cfg;
        std::cout << "resuming after epoch " << ck.epochs_done << "\n";
    } else {
        cfg = cfg_path.empty() ? ModelConfig::synthetic_defaults() : ModelConfig::load(cfg_path);
        apply_seed_env(cfg);
        trainer = std::make_unique<Trainer>(cfg);
    }
    Dataset ds = load_dataset(dataset_dir(data_dir, "train"), LoadNeeds{}, cfg.max_frames,
                              cfg.max_tokens);
    fs::create_directories(out_dir);
    std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string(),
                      resume.empty() ? std::ios::trunc : std::ios::app);
    trainer->train(ds, out_dir, &log);
    std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.imgc").string() << "\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& branch_opt,
             const std::string& report_path) {
    Checkpoint ck = read_checkpoint(ckpt);
    auto model = model_from_checkpoint(ck);
    const Branch branch =
        branch_opt.empty() ? model->cfg.branch_for_inference : branch_from_name(branch_opt);
    LoadNeeds needs;
    needs.visual = branch != Branch::Audio;
    needs.audio = branch != Branch::Visual;
    Dataset ds = load_dataset(dataset_dir(data_dir, "test"), needs, model->cfg.max_frames,
                              model->cfg.max_tokens);
    EvalReport rep = evaluate_model(*model, ds, branch);
    if (!report_path.empty()) {
        std::ofstream(report_path) << rep.to_json() << "\n";
        std::cout << "report: " << report_path << "\n";
    }
    std::cout << "branch=" << branch_name(branch) << " R1@3=" << rep.r1_at[3]
              << " R1@5=" << rep.r1_at[5] << " R1@7=" << rep.r1_at[7] << " mIoU=" << rep.miou
              << "\n";
    return 0;
}

int run_noise_sweep(const std::string& ckpt, const std::string& data_dir,
                    const std::string& fractions_csv, long seed, const std::string& report_path) {
    Checkpoint ck = read_checkpoint(ckpt);
    auto model = model_from_checkpoint(ck);
    Dataset ds = load_dataset(dataset_dir(data_dir, "test"), LoadNeeds{}, model->cfg.max_frames,
                              model->cfg.max_tokens);
    std::vector<double> fractions;
    std::stringstream ss(fractions_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) fractions.push_back(std::stod(tok));
    auto rows = noise_sweep(*model, ds, fractions, static_cast<uint64_t>(seed));
    printf("%-10s %-10s %-14s %-14s\n", "fraction", "mean_p", "mIoU(AIP)", "mIoU(p=0.5)");
    for (const SweepRow& r : rows)
        printf("%-10.3f %-10.4f %-14.3f %-14.3f\n", r.fraction, r.mean_p, r.miou_with_aip,
               r.miou_fixed_half);
    if (!report_path.empty()) {
        std::ofstream(report_path) << sweep_to_json(rows) << "\n";
        std::cout << "report: " << report_path << "\n";
    }
    return 0;
}

void write_svg_curve(const std::string& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<std::vector<double>>& series,
                     const std::vector<std::string>& labels) {
    const int W = 520, H = 360, ML = 60, MR = 20, MT = 40, MB = 40;
    double ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (double v : s) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double xmin = xs.front(), xmax = xs.back() > xs.front() ? xs.back() : xs.front() + 1.0;
    auto X = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto Y = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
    std::ofstream os(path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    os << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    for (size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill='none' stroke='" << colors[s % 3] << "' stroke-width='2' points='";
        for (size_t i = 0; i < xs.size(); ++i) os << X(xs[i]) << "," << Y(series[s][i]) << " ";
        os << "'/>\n";
        os << "<text x='" << W - MR - 150 << "' y='" << MT + 16 * s << "' font-size='12' fill='"
           << colors[s % 3] << "'>" << labels[s] << "</text>\n";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", ymin);
    os << "<text x='" << ML - 6 << "' y='" << H - MB << "' text-anchor='end' font-size='11'>" << buf
       << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", ymax);
    os << "<text x='" << ML - 6 << "' y='" << MT + 4 << "' text-anchor='end' font-size='11'>" << buf
       << "</text>\n";
    os << "</svg>\n";
}

int run_report(const std::string& in_path, const std::string& svg_dir) {
    const std::string text = read_file(in_path);
    // A noise sweep file carries a type marker; everything else is an
    // evaluation report.
    if (text.find("\"noise_sweep\"") != std::string::npos) {
        auto rows = sweep_from_json_text(text);
        printf("%-10s %-10s %-14s %-14s\n", "fraction", "mean_p", "mIoU(AIP)", "mIoU(p=0.5)");
        for (const SweepRow& r : rows)
            printf("%-10.3f %-10.4f %-14.3f %-14.3f\n", r.fraction, r.mean_p, r.miou_with_aip,
                   r.miou_fixed_half);
        if (!svg_dir.empty()) {
            fs::create_directories(svg_dir);
            std::vector<double> xs;
            std::vector<double> p, a, f;
            for (const SweepRow& r : rows) {
                xs.push_back(r.fraction);
                p.push_back(r.mean_p);
                a.push_back(r.miou_with_aip);
                f.push_back(r.miou_fixed_half);
            }
            write_svg_curve((fs::path(svg_dir) / "sweep_miou.svg").string(),
                            "mIoU vs noise fraction", xs, {a, f}, {"AIP-weighted", "fixed p=0.5"});
            write_svg_curve((fs::path(svg_dir) / "sweep_mean_p.svg").string(),
                            "mean importance vs noise fraction", xs, {p}, {"mean p"});
            std::cout << "svg curves written to " << svg_dir << "\n";
        }
        return 0;
    }
    EvalReport rep = EvalReport::from_json_text(text);
    printf("%-8s %-8s %-8s %-8s\n", "R1@3", "R1@5", "R1@7", "mIoU");
    printf("%-8.3f %-8.3f %-8.3f %-8.3f\n", rep.r1_at[3], rep.r1_at[5], rep.r1_at[7], rep.miou);
    printf("(%zu queries; thresholds are strict: IoU must exceed mu*0.1)\n", rep.per_query.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"importance-aware multi-granularity video moment retrieval"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, cfg_path, data_dir, resume, ckpt, branch, report_path, in_path,
        svg_dir;
    std::string fractions = "0,0.25,0.5,0.75,1.0";
    long sweep_seed = 17;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", spec_path, "synthetic spec JSON (defaults when omitted)");
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "train the three-branch model");
    train->add_option("--config", cfg_path, "model config JSON (desk-scale defaults when omitted)");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "checkpoint/log directory")->required();
    train->add_option("--resume", resume, "resume from checkpoint");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--branch", branch, "fusion|visual|audio");
    eval->add_option("--report", report_path, "write EvalReport JSON here");

    auto* sweep = app.add_subcommand("noise-sweep", "audio noise robustness sweep");
    sweep->add_option("--ckpt", ckpt, "checkpoint file")->required();
    sweep->add_option("--data", data_dir, "dataset directory")->required();
    sweep->add_option("--fractions", fractions, "comma-separated fractions, ascending");
    sweep->add_option("--seed", sweep_seed, "noise selection seed");
    sweep->add_option("--report", report_path, "write sweep JSON here");

    auto* report = app.add_subcommand("report", "render a report as text (and SVG)");
    report->add_option("--in", in_path, "EvalReport or sweep JSON")->required();
    report->add_option("--svg", svg_dir, "write SVG curves into this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(spec_path, out_dir);
        if (train->parsed()) return run_train(cfg_path, data_dir, out_dir, resume);
        if (eval->parsed()) return run_eval(ckpt, data_dir, branch, report_path);
        if (sweep->parsed()) return run_noise_sweep(ckpt, data_dir, fractions, sweep_seed, report_path);
        if (report->parsed()) return run_report(in_path, svg_dir);
    } catch (const TrainingDivergence& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
