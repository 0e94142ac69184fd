// Copyright 2026 The CaSNet-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// casnet: command-line front end.
//
//   simulate          render a scene to mix_<m>.wav, target.wav, manifest.json
//   enhance           run the fusion pipeline on a scene directory
//   mvdr              oracle MVDR baseline on a scene
//   sweep-rank        one enhance run per rank, written as CSV
//   replay            enhance from a recorded .casf frame stream
//   describe-weights  print the tensor table of a weight manifest
//   eval              SI-SDR and STOI of a wav against a reference
//   init-weights      write an untrained manifest (pipeline testing)
//
// Exit codes: 0 success, 1 usage, 2 data error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "casnet/casnet.hpp"

namespace fs = std::filesystem;
using namespace casnet;

namespace {

bool g_allow_resample = true;

Waveform load_wav(const std::string& path) { return read_wav(path, 16000.0, g_allow_resample); }

struct SceneDir {
  nlohmann::json manifest;
  std::vector<Waveform> mix;
  Waveform target;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Accepts a scene directory or the path of its manifest.json.
fs::path scene_root(const std::string& arg) {
  fs::path p(arg);
  return fs::is_directory(p) ? p : p.parent_path();
}

SceneDir load_scene_dir(const std::string& arg) {
  const fs::path root = scene_root(arg);
  SceneDir s;
  s.manifest = read_json((root / "manifest.json").string());
  const auto mics = s.manifest.at("mixtures").get<std::vector<std::string>>();
  for (const auto& f : mics) s.mix.push_back(load_wav((root / f).string()));
  s.target = load_wav((root / s.manifest.at("target").get<std::string>()).string());
  return s;
}

RenderedScene render_from_spec(const SceneSpec& spec) {
  return render_scene(spec, 16000.0, [](const std::string& p) { return load_wav(p); });
}

std::vector<std::size_t> parse_ranks(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(std::stoul(item));
    } else {
      const auto lo = std::stoul(item.substr(0, dots)), hi = std::stoul(item.substr(dots + 2));
      CASNET_CHECK(lo <= hi, Error, "bad rank range: " + item);
      for (auto a = lo; a <= hi; ++a) out.push_back(a);
    }
  }
  CASNET_CHECK(!out.empty(), Error, "no ranks given");
  return out;
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

struct SimulateArgs {
  std::string speech, out, scene;
  std::vector<std::string> noises;
  std::size_t mics = 6;
  double snr = 0.0;
};

int cmd_simulate(const SimulateArgs& a, const std::string& config, std::uint64_t seed) {
  const std::string& file = a.scene.empty() ? config : a.scene;
  SceneSpec spec = file.empty() ? random_scene(seed, a.mics, a.snr) : scene_from_json(read_json(file));
  if (!a.speech.empty()) spec.speech_path = a.speech;
  for (std::size_t j = 0; j < a.noises.size(); ++j) {
    CASNET_CHECK(j < spec.noises.size(), Error, "more noise files than noise sources in the scene");
    spec.noises[j].kind = NoiseKind::File;
    spec.noises[j].path = a.noises[j];
  }
  const RenderedScene sc = render_from_spec(spec);
  fs::create_directories(a.out);
  nlohmann::json man;
  man["scene"] = to_json(spec);
  man["seed"] = spec.seed;
  man["snr_db"] = spec.snr_db;
  man["fs"] = 16000;
  man["noise_gain"] = sc.noise_gain;
  for (std::size_t m = 0; m < sc.mix.size(); ++m) {
    const std::string f = "mix_" + std::to_string(m) + ".wav";
    write_wav((fs::path(a.out) / f).string(), sc.mix[m]);
    man["mixtures"].push_back(f);
  }
  write_wav((fs::path(a.out) / "target.wav").string(), sc.target);
  man["target"] = "target.wav";
  std::ofstream((fs::path(a.out) / "manifest.json").string()) << man.dump(2) << "\n";
  std::cout << "wrote " << sc.mix.size() << " mixtures to " << a.out << " (SNR " << fmt(spec.snr_db, 1)
            << " dB, seed " << spec.seed << ")\n";
  return 0;
}

struct EnhanceArgs {
  std::string scene, weights, out, mode = "compressed", dump_frames;
  std::size_t rank = 4, max_delay = 0;
  double drop = 0.0;
  int gla_iters = 1;
};

PipelineOptions pipeline_options(const EnhanceArgs& a, std::uint64_t seed) {
  PipelineOptions opt;
  CASNET_CHECK(a.mode == "compressed" || a.mode == "raw", Error, "mode must be compressed or raw");
  opt.mode = a.mode == "raw" ? TransportMode::Raw : TransportMode::Compressed;
  opt.rank = a.rank;
  opt.channel.drop_prob = a.drop;
  opt.channel.max_delay_frames = static_cast<std::uint32_t>(a.max_delay);
  opt.channel.jitter_seed = seed;
  opt.gla_iters = a.gla_iters;
  return opt;
}

void print_row_header() { std::cout << "mode        rank  nsa     si_sdr_db  stoi    recv/sent\n"; }

void print_row(const std::string& mode, std::size_t rank, const EnhanceResult& r, const Waveform& target) {
  const double nsa_v = r.nsa ? r.nsa->nsa : 1.0;
  std::printf("%-10s  %4zu  %-6s  %-9s  %-6s  %zu/%zu\n", mode.c_str(), mode == "raw" ? 0 : rank,
              fmt(nsa_v, 3).c_str(), fmt(si_sdr(r.output, target), 2).c_str(), fmt(stoi(r.output, target), 3).c_str(),
              r.link.accepted, r.link.sent);
}

int cmd_enhance(const EnhanceArgs& a, std::uint64_t seed) {
  const auto [w, cfg] = load_manifest(a.weights);
  const SceneDir sc = load_scene_dir(a.scene);
  const PipelineOptions opt = pipeline_options(a, seed);
  const EnhanceResult r = enhance(sc.mix, w, cfg, opt);
  if (!a.out.empty()) write_wav(a.out, r.output);
  if (!a.dump_frames.empty()) {
    CASNET_CHECK(opt.mode == TransportMode::Compressed, Error, "frames can only be dumped in compressed mode");
    // Re-run the node side to record the exact packet stream.
    const auto arr = encode_array(sc.mix, w, cfg, opt.stft, true);
    std::vector<Packet> all;
    for (std::size_t m = 1; m < sc.mix.size(); ++m) {
      ChannelModel ch = opt.channel;
      ch.jitter_seed = opt.channel.jitter_seed + m;
      auto got = channel_apply(node_send(arr.enc[m].h, static_cast<std::uint16_t>(m), opt.rank), ch);
      all.insert(all.end(), got.begin(), got.end());
    }
    std::stable_sort(all.begin(), all.end(), [](const Packet& x, const Packet& y) { return x.step < y.step; });
    write_casf(a.dump_frames, all);
  }
  print_row_header();
  print_row(a.mode, a.rank, r, sc.target);
  if (r.nsa) std::cout << "nsa_asymptotic " << fmt(r.nsa->asymptotic, 4) << "\n";
  return 0;
}

int cmd_mvdr(const std::string& scene, const std::string& out) {
  const fs::path root = scene_root(scene);
  const auto man = read_json((root / "manifest.json").string());
  const SceneSpec spec = scene_from_json(man.at("scene"));
  const RenderedScene sc = render_from_spec(spec);
  std::vector<Spectrogram> S, N, X;
  const StftConfig cfg;
  for (std::size_t m = 0; m < sc.mix.size(); ++m) {
    S.push_back(stft(sc.speech[m], cfg));
    N.push_back(stft(sc.noise[m], cfg));
    X.push_back(stft(sc.mix[m], cfg));
  }
  Waveform y = mvdr_enhance(X, estimate_oracle_cov(S, N), 0);
  y.samples.resize(sc.mix[0].size(), 0.0);
  write_wav(out, y);
  std::cout << "noisy  si_sdr " << fmt(si_sdr(sc.mix[0], sc.target), 2) << " dB  stoi "
            << fmt(stoi(sc.mix[0], sc.target), 3) << "\n";
  std::cout << "mvdr   si_sdr " << fmt(si_sdr(y, sc.target), 2) << " dB  stoi " << fmt(stoi(y, sc.target), 3) << "\n";
  return 0;
}

int cmd_sweep(const EnhanceArgs& base, const std::string& ranks_arg, const std::string& csv, std::size_t threads,
              std::uint64_t seed) {
  const auto [w, cfg] = load_manifest(base.weights);
  const SceneDir sc = load_scene_dir(base.scene);
  const auto ranks = parse_ranks(ranks_arg);
  for (auto a : ranks)
    CASNET_CHECK(a >= 1 && a <= std::min(cfg.d, cfg.f_prime), Error, "rank " + std::to_string(a) + " out of range");

  std::vector<Tensor3> node_feats;
  if (sc.mix.size() > 1) {
    const auto arr = encode_array(sc.mix, w, cfg, StftConfig{}, true);
    for (std::size_t m = 1; m < arr.enc.size(); ++m) node_feats.push_back(arr.enc[m].h);
  }

  struct Row {
    double nsa, sisdr, stoi, mse;
  };
  std::vector<Row> rows(ranks.size());
  auto run = [&](std::size_t i) {
    EnhanceArgs a = base;
    a.rank = ranks[i];
    PipelineOptions opt = pipeline_options(a, seed);
    opt.parallel = false;
    const auto r = enhance(sc.mix, w, cfg, opt);
    rows[i] = {r.nsa->nsa, si_sdr(r.output, sc.target), stoi(r.output, sc.target),
               node_feats.empty() ? 0.0 : feature_mse(node_feats, ranks[i])};
  };
  const std::size_t nthreads = std::max<std::size_t>(1, threads ? threads : std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t t = 0; t < std::min(nthreads, ranks.size()); ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < ranks.size();) {
        try {
          run(i);
        } catch (...) {
          std::lock_guard lk(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv);
  out << "a,nsa,si_sdr,stoi,feature_mse\n";
  char buf[256];
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.4f,%.5f,%.8e\n", ranks[i], rows[i].nsa, rows[i].sisdr, rows[i].stoi,
                  rows[i].mse);
    out << buf;
  }
  std::cout << "wrote " << ranks.size() << " rows to " << csv << "\n";
  return 0;
}

int cmd_replay(const std::string& scene, const std::string& weights, const std::string& frames,
               const std::string& out) {
  const auto [w, cfg] = load_manifest(weights);
  const SceneDir sc = load_scene_dir(scene);
  const auto packets = read_casf(frames);
  const EnhanceResult r = enhance_from_packets(sc.mix[0], packets, sc.mix.size() - 1, w, cfg);
  if (!out.empty()) write_wav(out, r.output);
  std::cout << "replayed " << packets.size() << " frames (" << r.link.accepted << " accepted, " << r.link.late
            << " late, " << r.link.corrupt << " corrupt)\n";
  std::cout << "si_sdr " << fmt(si_sdr(r.output, sc.target), 2) << " dB  stoi " << fmt(stoi(r.output, sc.target), 3)
            << "\n";
  return 0;
}

int cmd_describe(const std::string& path) {
  const auto [w, cfg] = load_manifest(path);
  std::cout << "config  " << to_json(cfg).dump() << "\n";
  std::printf("digest  %08x\n", w.digest());
  std::cout << "tensors " << w.size() << "  parameters " << w.parameter_count() << "\n\n";
  std::size_t width = 0;
  for (const auto& [name, _] : w.tensors()) width = std::max(width, name.size());
  for (const auto& [name, t] : w.tensors())
    std::printf("%-*s  %-16s  %zu\n", static_cast<int>(width), name.c_str(), shape_to_string(t.shape).c_str(),
                t.data.size());
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& ref_path) {
  const Waveform est = load_wav(est_path), ref = load_wav(ref_path);
  CASNET_CHECK(est.size() == ref.size(), ShapeError,
               "length mismatch: " + std::to_string(est.size()) + " vs " + std::to_string(ref.size()) + " samples");
  std::cout << "si_sdr " << fmt(si_sdr(est, ref), 2) << " dB\nstoi   " << fmt(stoi(est, ref), 4) << "\n";
  return 0;
}

int cmd_init_weights(const std::string& out, const std::string& config, std::uint64_t seed) {
  const ModelConfig cfg = config.empty() ? ModelConfig{} : model_config_from_json(read_json(config));
  const auto w = init_weights(cfg, seed);
  w.save(out);
  std::printf("wrote %s (%zu tensors, %zu parameters, digest %08x)\n", out.c_str(), w.size(), w.parameter_count(),
              w.digest());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casnet: compressed multi-device speech enhancement"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string config;
  app.add_option("--seed", seed, "Seed for scene generation, channel jitter and weight init");
  app.add_option("--config", config, "JSON config (scene for simulate, model for init-weights)");
  bool no_resample = false;
  app.add_flag("--no-resample", no_resample, "Reject WAV files not at 16 kHz instead of resampling");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Render a scene to a directory of wavs");
  c_sim->add_option("--scene", sim.scene, "Scene config (JSON); default is a random scene");
  c_sim->add_option("--speech", sim.speech, "Speech wav (default: synthetic)");
  c_sim->add_option("--noise", sim.noises, "Noise wav, one per noise source")->take_all();
  c_sim->add_option("--mics", sim.mics, "Microphones for a random scene")->check(CLI::Range(1, 64));
  c_sim->add_option("--snr", sim.snr, "SNR in dB for a random scene");
  c_sim->add_option("--out", sim.out, "Output directory")->required();

  EnhanceArgs en;
  auto add_enhance_opts = [&](CLI::App* c) {
    c->add_option("--scene", en.scene, "Scene directory")->required();
    c->add_option("--weights", en.weights, "Weight manifest")->required();
    c->add_option("--drop", en.drop, "Packet drop probability")->check(CLI::Range(0.0, 1.0));
    c->add_option("--max-delay", en.max_delay, "Maximum packet delay in frames");
    c->add_option("--gla-iters", en.gla_iters, "Griffin-Lim iterations")->check(CLI::NonNegativeNumber);
  };
  auto* c_en = app.add_subcommand("enhance", "Enhance the reference channel of a scene");
  add_enhance_opts(c_en);
  c_en->add_option("--rank", en.rank, "SVD rank per frame");
  c_en->add_option("--mode", en.mode, "compressed or raw")->check(CLI::IsMember({"compressed", "raw"}));
  c_en->add_option("--out", en.out, "Output wav");
  c_en->add_option("--dump-frames", en.dump_frames, "Record the received frame stream (.casf)");

  std::string mvdr_scene, mvdr_out;
  auto* c_mvdr = app.add_subcommand("mvdr", "Oracle MVDR baseline");
  c_mvdr->add_option("--scene", mvdr_scene, "Scene directory or manifest.json")->required();
  c_mvdr->add_option("--out", mvdr_out, "Output wav")->required();

  std::string ranks = "1..16", csv;
  std::size_t threads = 0;
  auto* c_sweep = app.add_subcommand("sweep-rank", "Enhance once per rank and write a CSV");
  add_enhance_opts(c_sweep);
  c_sweep->add_option("--ranks", ranks, "Ranks, e.g. 1..16 or 1,2,4");
  c_sweep->add_option("--out", csv, "Output CSV")->required();
  c_sweep->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string rp_scene, rp_weights, rp_frames, rp_out;
  auto* c_replay = app.add_subcommand("replay", "Enhance from a recorded frame stream");
  c_replay->add_option("--scene", rp_scene, "Scene directory (reference channel and target)")->required();
  c_replay->add_option("--weights", rp_weights, "Weight manifest")->required();
  c_replay->add_option("frames,--frames", rp_frames, "Frame stream (.casf)")->required();
  c_replay->add_option("--out", rp_out, "Output wav");

  std::string dw_path;
  auto* c_dw = app.add_subcommand("describe-weights", "Print the tensor table of a manifest");
  c_dw->add_option("file", dw_path, "Weight manifest")->required();

  std::string ev_est, ev_ref;
  auto* c_eval = app.add_subcommand("eval", "SI-SDR and STOI of an estimate");
  c_eval->add_option("--est", ev_est, "Estimate wav")->required();
  c_eval->add_option("--ref", ev_ref, "Reference wav")->required();

  std::string iw_out;
  auto* c_iw = app.add_subcommand("init-weights", "Write an untrained weight manifest");
  c_iw->add_option("--out", iw_out, "Output manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  g_allow_resample = !no_resample;
  try {
    if (*c_sim) return cmd_simulate(sim, config, seed);
    if (*c_en) return cmd_enhance(en, seed);
    if (*c_mvdr) return cmd_mvdr(mvdr_scene, mvdr_out);
    if (*c_sweep) return cmd_sweep(en, ranks, csv, threads, seed);
    if (*c_replay) return cmd_replay(rp_scene, rp_weights, rp_frames, rp_out);
    if (*c_dw) return cmd_describe(dw_path);
    if (*c_eval) return cmd_eval(ev_est, ev_ref);
    if (*c_iw) return cmd_init_weights(iw_out, config, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
