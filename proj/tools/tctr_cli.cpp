// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tctr/harness.hpp"

namespace fs = std::filesystem;
using namespace tctr;
using namespace tctr::harness;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key = value config file");
    cmd->add_option("--set", c.sets, "override, key=value (repeatable)");
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&c](const std::uint64_t& s) {
            c.seed = s;
            c.has_seed = true;
        },
        "run seed (same as --set seed=N)");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

RunConfig resolve(const Common& c) {
    auto sets = c.sets;
    if (c.has_seed) sets.push_back("seed=" + std::to_string(c.seed));
    RunConfig cfg = load_config(c.config, sets);
    fs::create_directories(c.out);
    return cfg;
}

std::string path_in(const Common& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

num::ParamStore<float> load_model(const RunConfig& cfg, const std::string& checkpoint) {
    auto store = make_model<float>(cfg);
    num::load_checkpoint(checkpoint, store);
    return store;
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

int cmd_gen(const Common& o) {
    const RunConfig cfg = resolve(o);
    const auto train = synth::generate_dataset(cfg.scene, cfg.data.train_sequences, cfg.data.train_seed);
    const auto eval = synth::generate_dataset(cfg.scene, cfg.data.eval_sequences, cfg.data.eval_seed);
    synth::write_dataset(path_in(o, "train.lseq"), train);
    synth::write_dataset(path_in(o, "eval.lseq"), eval);
    std::cout << "train=" << path_in(o, "train.lseq") << " sequences=" << train.size() << "\n";
    std::cout << "eval=" << path_in(o, "eval.lseq") << " sequences=" << eval.size() << "\n";
    return 0;
}

int cmd_train(const Common& o, bool skip_eval) {
    const RunConfig cfg = resolve(o);
    const std::string text = config_text(cfg);
    write_text(path_in(o, "config.txt"), text);
    std::ofstream log(path_in(o, "train.log"));
    if (!log) throw IoError("cannot write " + path_in(o, "train.log"));
    log << text << "config_hash=" << hash_hex(config_hash(cfg)) << "\n";
    const auto data = training_set(cfg);
    const auto result = train(cfg, data, [&](const StepLog& s) {
        if (cfg.train.log_every > 0 && (s.step % cfg.train.log_every == 0 || s.step == cfg.train.steps)) {
            log << format_step(s) << "\n";
            std::cout << format_step(s) << "\n";
        }
    });
    num::save_checkpoint(path_in(o, "model.tckp"), result.store);
    EvalReport report;
    if (!skip_eval) {
        report = evaluate(result.store, cfg, evaluation_set(cfg));
        std::ostringstream r;
        write_report(r, report);
        log << r.str();
        std::cout << r.str();
    }
    const auto summary = make_summary(cfg, cfg.train.steps, result.final_loss(), report, result.wall_seconds);
    write_text(path_in(o, "run_summary.txt"), format_summary(summary));
    std::cout << "checkpoint=" << path_in(o, "model.tckp") << "\n";
    return 0;
}

int cmd_eval(const Common& o, const std::string& checkpoint) {
    const RunConfig cfg = resolve(o);
    const auto store = load_model(cfg, checkpoint);
    const auto report = evaluate(store, cfg, evaluation_set(cfg));
    std::ostringstream r;
    r << "config_hash=" << hash_hex(config_hash(cfg)) << "\n";
    write_report(r, report);
    write_text(path_in(o, "eval_report.txt"), r.str());
    std::cout << r.str();
    return 0;
}

int cmd_infer(const Common& o, const std::string& checkpoint) {
    const RunConfig cfg = resolve(o);
    const auto store = load_model(cfg, checkpoint);
    const auto preds = infer(store, cfg, evaluation_set(cfg));
    std::ostringstream r;
    r << std::setprecision(6);
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (const auto& d : preds[i])
            r << "sequence=" << i << " class=" << d.box.class_id << " score=" << d.score << " x=" << d.box.x
              << " y=" << d.box.y << " z=" << d.box.z << " l=" << d.box.l << " w=" << d.box.w << " h=" << d.box.h
              << " yaw=" << d.box.yaw << "\n";
    write_text(path_in(o, "detections.txt"), r.str());
    std::cout << r.str();
    return 0;
}

int cmd_gradcheck(const Common& o) {
    const RunConfig cfg = resolve(o);
    GradcheckOptions opt;
    opt.samples = cfg.gradcheck_samples;
    opt.step = cfg.gradcheck_step;
    opt.floor = cfg.gradcheck_floor;
    opt.tolerance = cfg.gradcheck_tolerance;
    opt.seed = cfg.seed;
    const auto report = gradcheck(cfg, cfg.gradcheck_preset, opt);
    std::ostringstream r;
    r << "preset=" << cfg.gradcheck_preset << "\n";
    write_gradcheck(r, report);
    write_text(path_in(o, "gradcheck.txt"), r.str());
    std::cout << r.str();
    return report.passed() ? 0 : 1;
}

int cmd_ablate(const Common& o) {
    const RunConfig cfg = resolve(o);
    const auto table = run_ablation(cfg, cfg.ablate_axis, training_set(cfg), evaluation_set(cfg),
                                    [](const std::string& line) { std::cout << line << std::endl; });
    const std::string text = format_table(table);
    write_text(path_in(o, "ablate_" + cfg.ablate_axis + ".txt"), text);
    std::cout << text;
    return 0;
}

int cmd_render(const Common& o, const std::string& checkpoint, int index) {
    const RunConfig cfg = resolve(o);
    const auto data = evaluation_set(cfg);
    if (index < 0 || index >= static_cast<int>(data.size()))
        throw ConfigError("render index " + std::to_string(index) + " outside the " + std::to_string(data.size()) +
                          " evaluation sequences");
    const auto& seq = data[index];
    std::vector<head::Detection> dets;
    if (!checkpoint.empty())
        dets = detect(load_model(cfg, checkpoint), cfg, seq, sample_seed(cfg.seed, index, kEvalSalt));
    const std::string path = path_in(o, "render_" + std::to_string(index) + ".bmp");
    write_bmp(path, render_bev(seq.frames[seq.target], dets, cfg.grid, cfg.render_size));
    std::cout << "image=" << path << " detections=" << dets.size() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal-channel transformer for Lidar video detection"};
    app.require_subcommand(1);
    Common o;
    std::string checkpoint;
    std::string axis;
    std::string preset;
    int index = 0;
    bool skip_eval = false;

    auto* gen = app.add_subcommand("gen", "write synthetic train/eval LSEQ datasets");
    auto* tr = app.add_subcommand("train", "train, checkpoint and summarize a run");
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* inf = app.add_subcommand("infer", "write detections of a checkpoint");
    auto* gc = app.add_subcommand("gradcheck", "compare backprop to finite differences in double precision");
    auto* ab = app.add_subcommand("ablate", "train and evaluate the rows of one ablation axis");
    auto* rd = app.add_subcommand("render", "write a BEV bitmap of one evaluation sequence");
    for (auto* c : {gen, tr, ev, inf, gc, ab, rd}) add_common(c, o);
    tr->add_flag("--no-eval", skip_eval, "skip the evaluation after training");
    for (auto* c : {ev, inf}) c->add_option("--checkpoint", checkpoint, "TCKP file")->required();
    rd->add_option("--checkpoint", checkpoint, "TCKP file; without it only ground truth is drawn");
    rd->add_option("--index", index, "evaluation sequence index")->capture_default_str();
    ab->add_option("--axis", axis, "framework, encoder, fusion or frames");
    gc->add_option("--preset", preset, "toy, tiny or desk");

    CLI11_PARSE(app, argc, argv);
    if (!axis.empty()) o.sets.push_back("ablate.axis=" + axis);
    if (!preset.empty()) o.sets.push_back("gradcheck.preset=" + preset);
    try {
        if (*gen) return cmd_gen(o);
        if (*tr) return cmd_train(o, skip_eval);
        if (*ev) return cmd_eval(o, checkpoint);
        if (*inf) return cmd_infer(o, checkpoint);
        if (*gc) return cmd_gradcheck(o);
        if (*ab) return cmd_ablate(o);
        if (*rd) return cmd_render(o, checkpoint, index);
    } catch (const tctr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
