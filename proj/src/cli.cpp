#include "binembed/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "binembed/architectures.hpp"
#include "binembed/bench.hpp"
#include "binembed/distill.hpp"
#include "binembed/frontend.hpp"
#include "binembed/model_io.hpp"
#include "binembed/parallel.hpp"
#include "binembed/probe.hpp"
#include "binembed/synthdata.hpp"

namespace binembed::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Every command that writes outputs drops its exact invocation next to
// them, so runs are reconstructible.
void write_run_config(const std::string& out_path, const std::string& command,
                      const std::vector<std::string>& args, uint64_t seed) {
    nlohmann::json j;
    j["command"] = command;
    j["args"] = args;
    j["seed"] = seed;
    std::ofstream f(out_path + ".run.json");
    f << j.dump(2) << "\n";
}

void write_spectrogram_file(const std::string& path, const LogMelSpectrogram& mel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw audio_error("cannot write spectrogram file: " + path);
    const uint32_t version = 1, frames = static_cast<uint32_t>(mel.frames),
                   bins = static_cast<uint32_t>(mel.bins);
    out.write("BSPC", 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&frames), 4);
    out.write(reinterpret_cast<const char*>(&bins), 4);
    out.write(reinterpret_cast<const char*>(mel.data.data()),
              static_cast<std::streamsize>(mel.data.size() * 4));
    if (!out) throw audio_error("write failed: " + path);
}

std::unique_ptr<TeacherOracle> make_teacher(const std::string& spec) {
    if (spec.rfind("file:", 0) == 0) return std::make_unique<FileTeacher>(spec.substr(5));
    if (spec.rfind("synthetic:", 0) == 0)
        return std::make_unique<SyntheticTeacher>(std::stoull(spec.substr(10)));
    throw std::invalid_argument("teacher must be file:PATH or synthetic:SEED, got '" + spec + "'");
}

nlohmann::json latency_json(const LatencyResult& r) {
    nlohmann::json j;
    j["mean_ms"] = r.mean_ms;
    j["std_ms"] = r.std_ms;
    j["min_ms"] = r.min_ms;
    j["max_ms"] = r.max_ms;
    j["runs"] = r.runs;
    j["warmup_runs"] = r.warmup_runs;
    j["threads_during_timed"] = r.threads_during_timed;
    j["host"] = r.host;
    j["samples_ms"] = r.samples_ms;
    return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"binary audio embedding toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware default)");

    // frontend
    auto* c_frontend = app.add_subcommand("frontend", "log-mel spectrogram of a WAV file");
    std::string fr_wav, fr_out;
    c_frontend->add_option("--wav", fr_wav, "input WAV")->required();
    c_frontend->add_option("--out", fr_out, "output spectrogram file")->required();

    // distill
    auto* c_distill = app.add_subcommand("distill", "train a student against a teacher");
    std::string di_arch = "tiny", di_manifest, di_teacher, di_out, di_loss_csv;
    DistillConfig di_cfg;
    bool di_desk = false, di_binary_head = false;
    c_distill->add_option("--arch", di_arch, "densenet28|meliusnet22|tiny|tiny:<tap>");
    c_distill->add_option("--manifest", di_manifest)->required();
    c_distill->add_option("--teacher", di_teacher, "file:PATH or synthetic:SEED")->required();
    c_distill->add_option("--out", di_out, "output model file")->required();
    c_distill->add_option("--steps", di_cfg.steps);
    c_distill->add_option("--batch", di_cfg.batch_size);
    c_distill->add_option("--lr", di_cfg.learning_rate);
    c_distill->add_option("--seed", di_cfg.seed);
    c_distill->add_option("--loss-csv", di_loss_csv);
    c_distill->add_option("--log-every", di_cfg.log_every);
    c_distill->add_flag("--desk-preset", di_desk, "batch 32, 2000 steps");
    c_distill->add_flag("--binary-head", di_binary_head, "binary regressor head");

    // embed
    auto* c_embed = app.add_subcommand("embed", "embeddings for every segment of a manifest");
    std::string em_model, em_manifest, em_out, em_split = "train";
    c_embed->add_option("--model", em_model)->required();
    c_embed->add_option("--manifest", em_manifest)->required();
    c_embed->add_option("--out", em_out)->required();
    c_embed->add_option("--split", em_split, "train|test|all");

    // probe
    auto* c_probe = app.add_subcommand("probe", "linear probe on a frozen encoder");
    std::string pr_model, pr_manifest, pr_dump;
    ProbeConfig pr_cfg;
    c_probe->add_option("--model", pr_model)->required();
    c_probe->add_option("--manifest", pr_manifest)->required();
    c_probe->add_option("--epochs", pr_cfg.epochs);
    c_probe->add_option("--batch", pr_cfg.batch_size, "0 = auto (64, or 32 for small sets)");
    c_probe->add_option("--lr", pr_cfg.learning_rate);
    c_probe->add_option("--seed", pr_cfg.seed);
    c_probe->add_option("--dump", pr_dump, "per-clip prediction CSV");

    // bench
    auto* c_bench = app.add_subcommand("bench", "single-thread latency statistics");
    std::string be_model, be_out;
    int be_runs = 150, be_warmup = 10;
    uint64_t be_seed = 42;
    c_bench->add_option("--model", be_model)->required();
    c_bench->add_option("--runs", be_runs);
    c_bench->add_option("--warmup", be_warmup);
    c_bench->add_option("--seed", be_seed);
    c_bench->add_option("--out", be_out, "JSON output path (default stdout)");

    // sweep
    auto* c_sweep = app.add_subcommand("sweep", "accuracy/latency per intermediate tap");
    std::string sw_model, sw_manifest, sw_out, sw_svg;
    ProbeConfig sw_cfg;
    int sw_runs = 150;
    c_sweep->add_option("--model", sw_model)->required();
    c_sweep->add_option("--manifest", sw_manifest)->required();
    c_sweep->add_option("--out", sw_out, "sweep CSV")->required();
    c_sweep->add_option("--svg", sw_svg, "optional scatter plot");
    c_sweep->add_option("--epochs", sw_cfg.epochs);
    c_sweep->add_option("--batch", sw_cfg.batch_size);
    c_sweep->add_option("--lr", sw_cfg.learning_rate);
    c_sweep->add_option("--seed", sw_cfg.seed);
    c_sweep->add_option("--runs", sw_runs);

    // size
    auto* c_size = app.add_subcommand("size", "parameter and size report");
    std::string si_model, si_out;
    c_size->add_option("--model", si_model)->required();
    c_size->add_option("--out", si_out, "JSON output path (default stdout)");

    // inspect
    auto* c_inspect = app.add_subcommand("inspect", "layer table of a model file");
    std::string in_model;
    c_inspect->add_option("--model", in_model)->required();

    // synth-data
    auto* c_synth = app.add_subcommand("synth-data", "generate synthetic desk-scale audio");
    std::string sy_dir, sy_kind = "task";
    int sy_clips = 0;
    uint64_t sy_seed = 7;
    c_synth->add_option("--out-dir", sy_dir)->required();
    c_synth->add_option("--kind", sy_kind, "task (labeled 3-class) or corpus (unlabeled)");
    c_synth->add_option("--clips", sy_clips, "default 150 task / 120 corpus");
    c_synth->add_option("--seed", sy_seed);

    std::vector<const char*> argv;
    argv.push_back("binembed");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (threads > 0) set_num_threads(threads);

    try {
        if (c_frontend->parsed()) {
            Waveform w = read_wav(fr_wav);
            if (w.sample_rate != frontend::kSampleRate)
                w = resample_linear(w, frontend::kSampleRate);
            write_spectrogram_file(fr_out, log_mel(w));
            write_run_config(fr_out, "frontend", args, 0);
            std::cerr << "wrote " << fr_out << "\n";
        } else if (c_distill->parsed()) {
            if (di_desk) {
                di_cfg.batch_size = DistillConfig::desk_preset().batch_size;
                di_cfg.steps = DistillConfig::desk_preset().steps;
            }
            const auto teacher = make_teacher(di_teacher);
            LayerGraph g = build_by_name(di_arch);
            initialize_weights(g, di_cfg.seed);
            RegressorHead head = RegressorHead::make(static_cast<int>(g.embedding_dim()),
                                                     teacher->dim(), di_binary_head,
                                                     di_cfg.seed + 1);
            const Manifest m = load_manifest(di_manifest);
            const SegmentIndex idx = build_segment_index(m, "train");
            di_cfg.diagnostic_checkpoint = di_out + ".nan-ckpt";
            const DistillResult r = train_distill(g, head, *teacher, idx, di_cfg);
            export_student(g, di_out);
            if (!di_loss_csv.empty()) write_loss_csv(di_loss_csv, r);
            write_run_config(di_out, "distill", args, di_cfg.seed);
            std::cerr << "distilled " << di_arch << " for " << r.steps_run << " steps -> "
                      << di_out << "\n";
        } else if (c_embed->parsed()) {
            LayerGraph g = load_model(em_model);
            const Manifest m = load_manifest(em_manifest);
            const SegmentIndex idx = build_segment_index(m, em_split == "all" ? "" : em_split);
            ClipCache cache;
            std::vector<EmbeddingRecord> records(idx.segments.size());
            const int64_t n = static_cast<int64_t>(idx.segments.size());
            parallel_for(n, [&](int64_t i0, int64_t i1) {
                for (int64_t i = i0; i < i1; ++i) {
                    const Segment& seg = idx.segments[i];
                    const Waveform wav = ClipCache::slice_segment(
                        cache.get(idx.clips[seg.clip].path), seg.start);
                    FloatTensor emb = graph_forward(g, model_input(wav), BnMode::infer);
                    records[i] = {seg.key, std::move(emb.data)};
                }
            });
            write_embedding_file(em_out, static_cast<int>(g.embedding_dim()), records);
            write_run_config(em_out, "embed", args, 0);
            std::cerr << "wrote " << records.size() << " embeddings -> " << em_out << "\n";
        } else if (c_probe->parsed()) {
            LayerGraph g = load_model(pr_model);
            const Manifest m = load_manifest(pr_manifest);
            const LinearProbe probe = train_probe(g, m, pr_cfg);
            const ProbeEvaluation ev = evaluate_probe(g, probe, m);
            if (!pr_dump.empty()) {
                write_prediction_csv(pr_dump, ev, probe.classes);
                write_run_config(pr_dump, "probe", args, pr_cfg.seed);
            }
            nlohmann::json j;
            j["accuracy"] = ev.accuracy;
            j["classes"] = probe.classes;
            j["test_clips"] = ev.predictions.size();
            std::cout << j.dump(2) << "\n";
        } else if (c_bench->parsed()) {
            LayerGraph g = load_model(be_model);
            const LatencyResult r = latency_bench(g, be_runs, be_warmup, be_seed);
            const nlohmann::json j = latency_json(r);
            if (be_out.empty()) {
                std::cout << j.dump(2) << "\n";
            } else {
                std::ofstream f(be_out);
                f << j.dump(2) << "\n";
                write_run_config(be_out, "bench", args, be_seed);
            }
            std::cerr << "mean " << r.mean_ms << " ms over " << r.runs << " runs\n";
        } else if (c_sweep->parsed()) {
            LayerGraph g = load_model(sw_model);
            const Manifest m = load_manifest(sw_manifest);
            const SweepResult r = layer_sweep(g, m, sw_cfg, sw_runs);
            write_sweep_csv(sw_out, r);
            if (!sw_svg.empty()) write_sweep_svg(sw_svg, r);
            write_run_config(sw_out, "sweep", args, sw_cfg.seed);
            for (const auto& e : r.errors) std::cerr << "tap failed: " << e << "\n";
            std::cerr << "swept " << r.rows.size() << " taps -> " << sw_out << "\n";
        } else if (c_size->parsed()) {
            const LayerGraph g = load_model(si_model);
            const SizeReport r = size_report(g);
            nlohmann::json j;
            j["param_count_total"] = r.param_count_total;
            j["param_count_binary"] = r.param_count_binary;
            j["param_count_float"] = r.param_count_float;
            j["float_size_mb"] = r.float_size_mb;
            j["quantized_size_mb"] = r.quantized_size_mb;
            j["quantized_weights_mb"] = r.quantized_weights_mb;
            j["header_bytes"] = r.header_bytes;
            if (si_out.empty()) {
                std::cout << j.dump(2) << "\n";
            } else {
                std::ofstream f(si_out);
                f << j.dump(2) << "\n";
                write_run_config(si_out, "size", args, 0);
            }
        } else if (c_inspect->parsed()) {
            const LayerGraph g = load_model(in_model);
            std::cout << "arch: " << g.arch;
            if (!g.tiny_tap.empty()) std::cout << " (tap " << g.tiny_tap << ")";
            std::cout << "\ninput: " << shape_str(g.input_shape) << "\n";
            std::printf("%-4s %-32s %-20s %-14s %10s %10s\n", "#", "name", "kind", "out", "binary",
                        "float");
            for (size_t i = 0; i < g.layers.size(); ++i) {
                const auto& l = g.layers[i];
                const int64_t bin = l.kind == LayerKind::binary_conv ? l.weight_count() : 0;
                std::printf("%-4zu %-32s %-20s %-14s %10lld %10lld\n", i, l.name.c_str(),
                            layer_kind_name(l.kind), shape_str(l.out_shape).c_str(),
                            static_cast<long long>(bin),
                            static_cast<long long>(l.float_param_count()));
            }
            const ParamCounts c = parameter_count(g);
            std::printf("total %lld (binary %lld, float %lld)\n", static_cast<long long>(c.total),
                        static_cast<long long>(c.binary), static_cast<long long>(c.floating));
        } else if (c_synth->parsed()) {
            std::string manifest;
            if (sy_kind == "task")
                manifest = make_probe_task(sy_dir, sy_clips > 0 ? sy_clips : 150, sy_seed);
            else if (sy_kind == "corpus")
                manifest = make_distill_corpus(sy_dir, sy_clips > 0 ? sy_clips : 120, sy_seed);
            else
                throw std::invalid_argument("--kind must be task or corpus");
            write_run_config(manifest, "synth-data", args, sy_seed);
            std::cout << manifest << "\n";
        }
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace binembed::cli
