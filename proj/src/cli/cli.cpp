#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mtur/cli.hpp"
#include "mtur/error.hpp"
#include "mtur/metrics.hpp"
#include "mtur/parallel.hpp"
#include "mtur/physics.hpp"
#include "mtur/rng.hpp"
#include "mtur/training.hpp"

namespace mtur::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ typed keys

enum class Kind { uint, real, boolean, text, triple, sizes };

struct Key {
  std::string name;
  Kind kind;
  json def;  // null: unset unless given
  std::string help;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<Key> keys;
  std::function<void(const json&, Context&)> action;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) parts.push_back(item);
  return parts;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s.find('-') != std::string::npos) throw std::invalid_argument(s);
    v = std::stoull(s, &used, 10);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ConfigError(key + ": expected a finite number, got '" + s + "'");
  return v;
}

json from_text(const Key& k, const std::string& s) {
  switch (k.kind) {
    case Kind::uint:
      return parse_uint(k.name, s);
    case Kind::real:
      return parse_real(k.name, s);
    case Kind::boolean:
      if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
      if (s == "false" || s == "0" || s == "no" || s == "off") return false;
      throw ConfigError(k.name + ": expected true or false, got '" + s + "'");
    case Kind::text:
      return s;
    case Kind::triple: {
      const auto parts = split(s, ',');
      if (parts.size() != 3) throw ConfigError(k.name + ": expected three comma-separated numbers, got '" + s + "'");
      json a = json::array();
      for (const auto& p : parts) a.push_back(parse_real(k.name, p));
      return a;
    }
    case Kind::sizes: {
      json a = json::array();
      for (const auto& p : split(s, ',')) a.push_back(parse_uint(k.name, p));
      if (a.empty()) throw ConfigError(k.name + ": expected at least one size");
      return a;
    }
  }
  return nullptr;
}

// Config-file values: strings from key = value files, typed values from JSON.
json convert(const Key& k, const json& v) {
  if (v.is_null()) {
    if (!k.def.is_null()) throw ConfigError(k.name + ": may not be null");
    return v;
  }
  if (v.is_string()) return from_text(k, v.get<std::string>());
  const auto bad = [&] { return ConfigError(k.name + ": unexpected value " + v.dump()); };
  switch (k.kind) {
    case Kind::uint:
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw bad();
      return v.get<std::uint64_t>();
    case Kind::real:
      if (!v.is_number()) throw bad();
      return v.get<double>();
    case Kind::boolean:
      if (!v.is_boolean()) throw bad();
      return v;
    case Kind::text:
      throw bad();
    case Kind::triple:
      if (!v.is_array() || v.size() != 3) throw bad();
      for (const auto& e : v) {
        if (!e.is_number()) throw bad();
      }
      return v;
    case Kind::sizes:
      if (v.is_number_unsigned()) return json::array({v});
      if (!v.is_array() || v.empty()) throw bad();
      for (const auto& e : v) {
        if (!e.is_number_unsigned()) throw bad();
      }
      return v;
  }
  throw bad();
}

std::string flag_names(const Key& k) {
  std::string long_name = k.name;
  std::replace(long_name.begin(), long_name.end(), '_', '-');
  std::string flags = "--" + long_name;
  if (k.name == "input") flags = "-i," + flags;
  if (k.name == "output") flags = "-o," + flags;
  if (k.kind == Kind::boolean && k.def == true) flags += ",!--no-" + long_name;
  return flags;
}

// ------------------------------------------------------------ accessors

std::uint64_t u(const json& c, const char* k) { return c.at(k).get<std::uint64_t>(); }
double d(const json& c, const char* k) { return c.at(k).get<double>(); }
bool b(const json& c, const char* k) { return c.at(k).get<bool>(); }
std::string s(const json& c, const char* k) { return c.at(k).is_null() ? std::string() : c.at(k).get<std::string>(); }

fs::path required_path(const json& c, const char* k) {
  const auto v = s(c, k);
  if (v.empty()) {
    std::string flag = k;
    std::replace(flag.begin(), flag.end(), '_', '-');
    throw UsageError(std::string("missing --") + flag);
  }
  return v;
}

std::optional<physics::Airlight> airlight(const json& c) {
  if (c.at("airlight").is_null()) return std::nullopt;
  const auto& a = c.at("airlight");
  physics::Airlight al{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  al.validate();
  return al;
}

physics::PhysicsParams physics_params(const json& c) {
  physics::PhysicsParams p;
  p.patch_radius = u(c, "patch_radius");
  p.airlight_quantile = d(c, "airlight_quantile");
  if (c.contains("t0")) p.t0 = d(c, "t0");
  p.validate();
  return p;
}

// ------------------------------------------------------------ files

bool is_image_path(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".mttb";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && is_image_path(e.path())) files.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

struct Job {
  fs::path input, output;
};

// A single file maps to a single output file; a directory maps every image
// to the same file name inside the output directory.
std::vector<Job> plan_jobs(const fs::path& input, const fs::path& output) {
  if (!fs::exists(input)) throw IoError("input not found: " + input.string());
  if (!fs::is_directory(input)) return {{input, output}};
  fs::create_directories(output);
  std::vector<Job> jobs;
  for (const auto& f : list_images(input)) jobs.push_back({f, output / f.filename()});
  if (jobs.empty()) throw IoError("no images in " + input.string());
  return jobs;
}

// Sidecar output (MT maps) for job k: the path itself for a single file,
// `<dir>/<stem>.mttb` in directory mode.
fs::path side_output(const fs::path& base, const Job& job, bool directory_mode) {
  if (!directory_mode) return base;
  fs::create_directories(base);
  return base / (job.input.stem().string() + ".mttb");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

// ------------------------------------------------------------ models

net::MTURConfig model_config(const json& c) {
  const auto preset = s(c, "preset");
  net::MTURConfig m;
  if (preset == "tiny") {
    m = net::MTURConfig::tiny();
  } else if (preset != "full") {
    throw ConfigError("preset must be tiny or full, got '" + preset + "'");
  }
  m = net::MTURConfig::variant(s(c, "variant"), m);
  if (c.contains("groups_gn") && !c.at("groups_gn").is_null()) m.groups_gn = u(c, "groups_gn");
  m.validate();
  return m;
}

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;

template <typename T>
net::MTURModel<T> load_or_build(const json& c) {
  const auto ckpt = s(c, "checkpoint");
  if (!ckpt.empty()) return net::load_checkpoint<T>(ckpt);
  return net::MTURModel<T>::build(model_config(c), derive_seed(u(c, "seed"), kInitStream));
}

void check_precision(const json& c) {
  const auto p = s(c, "precision");
  if (p != "f32" && p != "f64") throw ConfigError("precision must be f32 or f64, got '" + p + "'");
}

// ------------------------------------------------------------ subcommands

const Key kSeed{"seed", Kind::uint, 0, "Seed for every random draw"};
const Key kJobs{"jobs", Kind::uint, 1, "Worker threads"};
const Key kInput{"input", Kind::text, "", "Input file or directory"};
const Key kOutput{"output", Kind::text, "", "Output file or directory"};
const Key kRadius{"patch_radius", Kind::uint, 7, "Dark-channel patch radius"};
const Key kQuantile{"airlight_quantile", Kind::real, 0.001, "Brightest dark-channel fraction used for A"};
const Key kAirlight{"airlight", Kind::triple, nullptr, "Airlight r,g,b (estimated when unset)"};
const Key kCheckpoint{"checkpoint", Kind::text, "", "Model checkpoint (.mttb with .json sidecar)"};
const Key kPreset{"preset", Kind::text, "full", "Architecture preset: tiny or full"};
const Key kVariant{"variant", Kind::text, "full", "full, basic, no_skip, no_concat, no_conv_after_concat"};
const Key kPrecision{"precision", Kind::text, "f32", "Model precision: f32 or f64"};
const Key kMtOutput{"mt_output", Kind::text, "", "Where to save MT maps (file, or directory for batches)"};

void cmd_mt(const json& c, Context& ctx) {
  const auto params = physics_params(c);
  const auto fixed = airlight(c);
  const auto jobs = plan_jobs(required_path(c, "input"), required_path(c, "output"));
  parallel_for(jobs.size(), u(c, "jobs"), [&](std::size_t k) {
    const auto img = load_image(jobs[k].input);
    const auto a = fixed ? *fixed : physics::estimate_airlight(img, params);
    const auto t = physics::estimate_mt(img, a, params.patch_radius);
    ensure_parent(jobs[k].output);
    save_image(t.values, jobs[k].output);
  });
  ctx.out << "mt: wrote " << jobs.size() << " map(s)\n";
}

void cmd_degrade(const json& c, Context& ctx) {
  const fs::path input = required_path(c, "input");
  const auto jobs = plan_jobs(input, required_path(c, "output"));
  const bool dir_mode = fs::is_directory(input);
  const auto a = airlight(c).value_or(physics::Airlight{0.1, 0.7, 0.8});
  a.validate();
  const auto style = physics::depth_style_from_string(s(c, "depth"));
  const double beta = d(c, "beta"), d_max = d(c, "d_max");
  if (!(beta >= 0)) throw ConfigError("beta must be >= 0");
  if (!(d_max >= 0)) throw ConfigError("d_max must be >= 0");
  const auto given_t = s(c, "transmission");
  if (!given_t.empty() && dir_mode) throw UsageError("--transmission applies to a single input image");
  const auto mt_out = s(c, "mt_output");
  const auto seed = u(c, "seed");

  parallel_for(jobs.size(), u(c, "jobs"), [&](std::size_t k) {
    const auto clean = load_image(jobs[k].input);
    physics::TransmissionMap t;
    if (!given_t.empty()) {
      t.values = load_gray(given_t);
    } else {
      t = physics::synth_transmission(clean.height(), clean.width(), derive_seed(seed, k), beta, style, d_max);
    }
    const auto degraded = physics::degrade(clean, t, a);
    ensure_parent(jobs[k].output);
    save_image(degraded, jobs[k].output);
    if (!mt_out.empty()) save_image(t.values, side_output(mt_out, jobs[k], dir_mode));
  });
  ctx.out << "degrade: wrote " << jobs.size() << " image(s), airlight " << a.r << "," << a.g << "," << a.b << "\n";
}

template <typename T>
void restore_neural(const json& c, const std::vector<Job>& jobs, bool dir_mode) {
  const auto model = net::load_checkpoint<T>(required_path(c, "checkpoint"));
  const auto mt_out = s(c, "mt_output");
  parallel_for(jobs.size(), u(c, "jobs"), [&](std::size_t k) {
    const auto r = train::infer(model, load_image(jobs[k].input));
    ensure_parent(jobs[k].output);
    save_image(r.enhanced, jobs[k].output);
    if (!mt_out.empty()) save_image(r.mt, side_output(mt_out, jobs[k], dir_mode));
  });
}

void cmd_restore(const json& c, Context& ctx) {
  const auto mode = s(c, "mode");
  if (mode != "neural" && mode != "classical") throw ConfigError("mode must be classical or neural, got '" + mode + "'");
  const fs::path input = required_path(c, "input");
  const auto jobs = plan_jobs(input, required_path(c, "output"));
  const bool dir_mode = fs::is_directory(input);
  if (mode == "neural") {
    check_precision(c);
    if (s(c, "precision") == "f64") {
      restore_neural<double>(c, jobs, dir_mode);
    } else {
      restore_neural<float>(c, jobs, dir_mode);
    }
  } else {
    const auto params = physics_params(c);
    const auto fixed = airlight(c);
    const auto given_t = s(c, "transmission");
    if (!given_t.empty() && dir_mode) throw UsageError("--transmission applies to a single input image");
    const auto mt_out = s(c, "mt_output");
    parallel_for(jobs.size(), u(c, "jobs"), [&](std::size_t k) {
      const auto img = load_image(jobs[k].input);
      const auto a = fixed ? *fixed : physics::estimate_airlight(img, params);
      physics::TransmissionMap t;
      if (!given_t.empty()) {
        t.values = load_gray(given_t);
      } else {
        t = physics::estimate_mt(img, a, params.patch_radius);
      }
      ensure_parent(jobs[k].output);
      save_image(physics::invert_restore(img, t, a, params.t0), jobs[k].output);
      if (!mt_out.empty()) save_image(t.values, side_output(mt_out, jobs[k], dir_mode));
    });
  }
  ctx.out << "restore (" << mode << "): wrote " << jobs.size() << " image(s)\n";
}

train::DatasetParams dataset_params(const json& c) {
  train::DatasetParams p;
  p.image_size = u(c, "size");
  p.mt_target = train::mt_target_from_string(s(c, "mt_target"));
  p.d_max = d(c, "d_max");
  p.jobs = u(c, "jobs");
  p.validate();
  return p;
}

void cmd_synth(const json& c, Context& ctx) {
  const auto out_dir = required_path(c, "output");
  const auto params = dataset_params(c);
  std::vector<ImageRGB> clean;
  if (const auto in = s(c, "input"); !in.empty()) {
    const auto files = list_images(in);
    if (files.empty()) throw ConfigError("no clean images in " + in);
    for (const auto& f : files) clean.push_back(load_image(f));
  }
  const auto samples = train::make_synthetic_dataset(u(c, "count"), params, u(c, "seed"), clean);
  train::write_dataset(samples, out_dir, b(c, "lossless"));
  ctx.out << "synth-data: " << samples.size() << " samples in " << out_dir.string() << "\n";
  ctx.out << "dataset_hash " << train::dataset_hash(samples) << "\n";
}

template <typename T>
void run_train(const json& c, Context& ctx) {
  std::vector<train::Sample> data;
  if (const auto in = s(c, "input"); !in.empty()) {
    data = train::read_dataset(in);
  } else {
    data = train::make_synthetic_dataset(u(c, "count"), dataset_params(c), derive_seed(u(c, "seed"), kDataStream));
  }
  std::vector<train::Sample> val;
  if (const auto v = s(c, "validation"); !v.empty()) val = train::read_dataset(v);

  train::TrainConfig tc;
  tc.batch_size = u(c, "batch_size");
  tc.lr = d(c, "lr");
  tc.iterations = u(c, "iterations");
  tc.lambda_mt = d(c, "lambda_mt");
  tc.seed = u(c, "seed");
  tc.checkpoint_every = u(c, "checkpoint_every");
  tc.validate_every = u(c, "validate_every");
  tc.log_every = u(c, "log_every");
  tc.image_size = u(c, "size");
  tc.augment = b(c, "augment");
  tc.output_dir = required_path(c, "output");

  auto model = load_or_build<T>(c);
  ctx.err << "mtur: dataset " << data.size() << " samples, hash " << train::dataset_hash(data) << "\n";
  const auto report = train::train(model, data, tc, val.empty() ? nullptr : &val);
  ctx.out << "train: " << report.loss.size() << " iterations, first loss " << std::setprecision(8)
          << (report.loss.empty() ? 0.0 : report.loss.front()) << ", last loss "
          << (report.loss.empty() ? 0.0 : report.loss.back()) << "\n";
  ctx.out << "checkpoint " << report.final_checkpoint << "\n";
}

void cmd_train(const json& c, Context& ctx) {
  check_precision(c);
  if (s(c, "precision") == "f64") {
    run_train<double>(c, ctx);
  } else {
    run_train<float>(c, ctx);
  }
}

struct EvalPair {
  std::string id;
  fs::path input;
  std::optional<fs::path> reference;
  std::optional<train::Sample> sample;  // manifest input
};

std::vector<EvalPair> eval_pairs(const json& c) {
  const fs::path input = required_path(c, "input");
  const auto ref = s(c, "reference");
  std::vector<EvalPair> pairs;
  if (!fs::is_directory(input) && input.extension() == ".json") {
    for (auto& smp : train::read_dataset(input)) pairs.push_back({smp.id, input, std::nullopt, std::move(smp)});
    return pairs;
  }
  if (!fs::is_directory(input)) throw IoError("eval input must be a directory or a manifest: " + input.string());
  std::vector<fs::path> refs;
  if (!ref.empty()) refs = list_images(ref);
  for (const auto& f : list_images(input)) {
    EvalPair p{f.stem().string(), f, std::nullopt, std::nullopt};
    if (!ref.empty()) {
      const auto it = std::find_if(refs.begin(), refs.end(), [&](const fs::path& r) { return r.stem() == f.stem(); });
      if (it == refs.end()) throw IoError("no reference for " + f.filename().string() + " in " + ref);
      p.reference = *it;
    }
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw IoError("no images in " + input.string());
  return pairs;
}

void cmd_eval(const json& c, Context& ctx) {
  const auto pairs = eval_pairs(c);
  std::optional<net::MTURModel<float>> model;
  if (!s(c, "checkpoint").empty()) model.emplace(net::load_checkpoint<float>(s(c, "checkpoint")));

  metrics::EvalReport report;
  report.config_hash = metrics::config_hash(c);
  report.per_image.resize(pairs.size());
  parallel_for(pairs.size(), u(c, "jobs"), [&](std::size_t k) {
    const auto& p = pairs[k];
    ImageRGB img, ref;
    bool has_ref = true;
    if (p.sample) {
      img = p.sample->degraded;
      ref = p.sample->reference;
    } else {
      img = load_image(p.input);
      has_ref = p.reference.has_value();
      if (has_ref) ref = load_image(*p.reference);
    }
    std::optional<double> ms;
    if (model) {
      const auto t0 = std::chrono::steady_clock::now();
      img = train::infer(*model, img).enhanced;
      ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    auto rec = metrics::evaluate(p.id, img, has_ref ? &ref : nullptr);
    rec.timing_ms = ms;
    report.per_image[k] = std::move(rec);
  });
  report.summarize();

  const auto text = report.to_json().dump(2) + "\n";
  if (const auto out = s(c, "output"); !out.empty()) {
    write_text(out, text);
  } else {
    ctx.out << text;
  }
  if (const auto csv = s(c, "csv"); !csv.empty()) write_text(csv, report.to_csv(s(c, "method")));
  for (const auto& [name, sm] : report.aggregate) {
    ctx.err << "mtur: " << name << " mean " << sm.mean << " std " << sm.std << " n " << sm.count << "\n";
  }
}

void cmd_bench(const json& c, Context& ctx) {
  const auto model = load_or_build<float>(c);
  json results = json::array();
  ctx.out << "size     fps        mean_ms    p50_ms     p95_ms     consistency\n";
  for (const auto& sz : c.at("size")) {
    const auto r = train::fps_benchmark(model, sz.get<std::size_t>(), u(c, "warmup"), u(c, "runs"), u(c, "jobs"));
    ctx.out << std::left << std::setw(9) << r.image_size << std::setw(11) << std::fixed << std::setprecision(3)
            << r.fps << std::setw(11) << r.mean_latency_ms << std::setw(11) << r.p50_ms << std::setw(11) << r.p95_ms
            << std::setprecision(5) << r.consistency_error << "\n"
            << std::defaultfloat << std::right;
    results.push_back(r.to_json());
  }
  if (const auto out = s(c, "output"); !out.empty()) write_text(out, json{{"results", results}}.dump(2) + "\n");
}

std::vector<Command> commands() {
  const Key size{"size", Kind::uint, 64, "Image size (pixels per side)"};
  const Key mt_target{"mt_target", Kind::text, "estimated", "MT supervision: estimated or true_t"};
  const Key d_max{"d_max", Kind::real, 2.0, "Maximum scene depth"};
  const Key count{"count", Kind::uint, 200, "Number of synthetic pairs"};
  return {
      {"mt", "Estimate the medium transmission map of an image", {kSeed, kJobs, kInput, kOutput, kRadius, kQuantile, kAirlight}, cmd_mt},
      {"degrade",
       "Synthesize underwater degradation of clean images",
       {kSeed, kJobs, kInput, kOutput, kAirlight, kMtOutput,
        {"beta", Kind::real, 1.0, "Attenuation coefficient"},
        {"depth", Kind::text, "perlin", "Depth style: constant, linear_ramp or perlin"},
        d_max,
        {"transmission", Kind::text, "", "Use this transmission map instead of synthesizing one"}},
       cmd_degrade},
      {"restore",
       "Restore an image classically (physics inversion) or with a trained model",
       {kSeed, kJobs, kInput, kOutput, kCheckpoint, kPrecision, kRadius, kQuantile, kAirlight, kMtOutput,
        {"mode", Kind::text, "classical", "classical or neural"},
        {"transmission", Kind::text, "", "Known transmission map (classical mode)"},
        {"t0", Kind::real, 0.1, "Lower bound on the transmission divisor"}},
       cmd_restore},
      {"synth-data",
       "Write a synthetic paired dataset with a manifest",
       {kSeed, kJobs, kOutput, size, mt_target, d_max, count,
        {"input", Kind::text, "", "Directory of clean images (procedural scenes when unset)"},
        {"lossless", Kind::boolean, false, "Store images as .mttb instead of PNG"}},
       cmd_synth},
      {"train",
       "Train the network",
       {kSeed, kOutput, kCheckpoint, kPreset, kVariant, kPrecision, size, mt_target, d_max, count,
        {"jobs", Kind::uint, 1, "Worker threads for dataset synthesis"},
        {"input", Kind::text, "", "Dataset manifest (synthesized when unset)"},
        {"validation", Kind::text, "", "Validation manifest"},
        {"groups_gn", Kind::uint, nullptr, "GroupNorm groups (preset value when unset)"},
        {"iterations", Kind::uint, 100, "Adam steps"},
        {"batch_size", Kind::uint, 8, "Minibatch size"},
        {"lr", Kind::real, 1e-3, "Learning rate"},
        {"lambda_mt", Kind::real, 1.0, "Weight of the MT loss"},
        {"checkpoint_every", Kind::uint, 0, "Checkpoint period (0: final only)"},
        {"validate_every", Kind::uint, 0, "Validation period"},
        {"log_every", Kind::uint, 10, "Loss logging period (0: silent)"},
        {"augment", Kind::boolean, true, "Random flips and rotations"}},
       cmd_train},
      {"eval",
       "Score restored images against references",
       {kSeed, kJobs, kInput, kOutput, kCheckpoint,
        {"reference", Kind::text, "", "Directory of references matched by file stem"},
        {"csv", Kind::text, "", "Also write a CSV summary row here"},
        {"method", Kind::text, "mtur", "Method name for the CSV row"}},
       cmd_eval},
      {"bench",
       "Measure single-image inference throughput",
       {kSeed, kOutput, kCheckpoint, kPreset, kVariant,
        {"jobs", Kind::uint, 1, "Concurrent inference threads"},
        {"size", Kind::sizes, json::array({64, 256}), "Comma-separated image sizes"},
        {"runs", Kind::uint, 20, "Timed runs per size"},
        {"warmup", Kind::uint, 2, "Untimed runs per size"}},
       cmd_bench},
  };
}

struct Slot {
  std::string text;
  bool flag = false;
  CLI::Option* opt = nullptr;
};

int code_for(const Error& e) {
  const std::string kind = e.kind();
  if (kind == "io") return 2;
  if (kind == "numerical") return 3;
  return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Medium-transmission guided underwater image restoration", "mtur"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mtur 0.1.0");

  const auto cmds = commands();
  std::vector<std::deque<Slot>> slots(cmds.size());
  std::vector<std::string> config_paths(cmds.size());
  std::vector<int> dump(cmds.size(), 0);
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    sub->add_option("--config", config_paths[i], "Config file (key = value lines or JSON)");
    sub->add_flag("--dump-config", dump[i], "Print the resolved configuration and exit");
    for (const auto& k : cmds[i].keys) {
      auto& slot = slots[i].emplace_back();
      const auto def = k.def.is_string() ? k.def.get<std::string>() : k.def.dump();
      if (k.kind == Kind::boolean) {
        slot.opt = sub->add_flag(flag_names(k), slot.flag, k.help);
      } else {
        slot.opt = sub->add_option(flag_names(k), slot.text, k.help)->default_str(def);
      }
    }
    subs.push_back(sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      if (dynamic_cast<const CLI::CallForVersion*>(&e)) {
        out << e.what() << "\n";
      } else {
        const auto chosen = app.get_subcommands();
        out << (chosen.empty() ? app.help() : chosen.front()->help());
      }
      return 0;
    }
    err << "mtur: error[usage]: " << e.what() << "\n";
    return 1;
  }

  std::size_t ci = 0;
  while (!subs[ci]->parsed()) ++ci;
  const auto& cmd = cmds[ci];
  Context ctx{out, err};
  try {
    json cfg = json::object();
    for (const auto& k : cmd.keys) cfg[k.name] = k.def;
    if (!config_paths[ci].empty()) {
      const auto file = load_config_file(config_paths[ci]);
      for (const auto& [key, value] : file.items()) {
        const auto it = std::find_if(cmd.keys.begin(), cmd.keys.end(), [&](const Key& k) { return k.name == key; });
        if (it == cmd.keys.end()) throw ConfigError("unknown key '" + key + "' in " + config_paths[ci]);
        cfg[key] = convert(*it, value);
      }
    }
    for (std::size_t k = 0; k < cmd.keys.size(); ++k) {
      const auto& slot = slots[ci][k];
      if (slot.opt->count() == 0) continue;
      cfg[cmd.keys[k].name] = cmd.keys[k].kind == Kind::boolean ? json(slot.flag) : from_text(cmd.keys[k], slot.text);
    }
    if (dump[ci]) {
      out << cfg.dump(2) << "\n";
      return 0;
    }
    err << "mtur: " << cmd.name << " seed " << cfg.at("seed").get<std::uint64_t>() << " config " << cfg.dump() << "\n";
    cmd.action(cfg, ctx);
  } catch (const Error& e) {
    err << "mtur: error[" << e.kind() << "]: " << e.what() << "\n";
    return code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "mtur: error[io]: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "mtur: error[config]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "mtur: error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mtur::cli
