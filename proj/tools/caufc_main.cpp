// caufc: generate, train, encode, decode and evaluate universal feature
// compression models from the command line. Exit codes: 0 success,
// 1 runtime failure, 2 usage error. All stochastic behavior is fixed by
// --seed; identical invocations produce identical artifacts.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "caufc/codec/bitstream.hpp"
#include "caufc/codec/train.hpp"
#include "caufc/eval.hpp"
#include "caufc/synthetic.hpp"

using namespace caufc;

namespace {

// Flag-level validation failures; mapped to exit code 2.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

bool g_quiet = false;

void say(const std::string& line) {
  if (!g_quiet) std::fprintf(stdout, "%s\n", line.c_str());
}

std::vector<uint32_t> parse_dims(const std::string& text) {
  std::vector<uint32_t> dims;
  size_t start = 0;
  while (start <= text.size()) {
    size_t at = text.find('x', start);
    std::string part = text.substr(start, at == std::string::npos ? at : at - start);
    if (part.empty()) throw UsageError("--dims: empty component in '" + text + "'");
    try {
      size_t used = 0;
      long v = std::stol(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument("range");
      dims.push_back(static_cast<uint32_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--dims: bad component '" + part + "' in '" + text + "'");
    }
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return dims;
}

std::pair<double, double> parse_range(const std::string& flag, const std::string& text) {
  size_t at = text.find(':');
  if (at == std::string::npos) throw UsageError(flag + ": expected LO:HI, got '" + text + "'");
  try {
    double lo = std::stod(text.substr(0, at));
    double hi = std::stod(text.substr(at + 1));
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError(flag + ": bad bounds '" + text + "'");
  }
}

std::pair<int, int> parse_ratio(const std::string& text) {
  size_t at = text.find(':');
  if (at == std::string::npos) throw UsageError("--ratio: expected A:B, got '" + text + "'");
  try {
    int a = std::stoi(text.substr(0, at));
    int b = std::stoi(text.substr(at + 1));
    if (a < 1 || b < 1) throw std::invalid_argument("range");
    return {a, b};
  } catch (const std::exception&) {
    throw UsageError("--ratio: parts must be integers >= 1, got '" + text + "'");
  }
}

NormMode parse_mode(const std::string& flag, const std::string& text) {
  if (text == "standard") return NormMode::Standard;
  if (text == "shifted") return NormMode::Shifted;
  throw UsageError(flag + ": expected standard|shifted, got '" + text + "'");
}

// Per-architecture alignment specs assembled from preset/override flags.
struct SpecFlags {
  std::string cnn_trunc, cnn_norm, cnn_mode;
  std::string vit_trunc, vit_norm, vit_mode;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--cnn-trunc", cnn_trunc, "cnn truncation bounds LO:HI");
    cmd->add_option("--cnn-norm", cnn_norm, "cnn normalization bounds LO:HI");
    cmd->add_option("--cnn-mode", cnn_mode, "cnn normalization mode (standard|shifted)");
    cmd->add_option("--vit-trunc", vit_trunc, "vit truncation bounds LO:HI");
    cmd->add_option("--vit-norm", vit_norm, "vit normalization bounds LO:HI");
    cmd->add_option("--vit-mode", vit_mode, "vit normalization mode (standard|shifted)");
  }

  AlignmentSpec resolve(Arch arch) const {
    AlignmentSpec s = arch == Arch::CnnLike ? AlignmentSpec::cnn_default()
                                            : AlignmentSpec::vit_default();
    const std::string& trunc = arch == Arch::CnnLike ? cnn_trunc : vit_trunc;
    const std::string& norm = arch == Arch::CnnLike ? cnn_norm : vit_norm;
    const std::string& mode = arch == Arch::CnnLike ? cnn_mode : vit_mode;
    const char* prefix = arch == Arch::CnnLike ? "--cnn" : "--vit";
    if (!mode.empty()) s.mode = parse_mode(std::string(prefix) + "-mode", mode);
    if (!trunc.empty()) {
      auto [lo, hi] = parse_range(std::string(prefix) + "-trunc", trunc);
      s.trunc_lo = lo;
      s.trunc_hi = hi;
      if (norm.empty() && s.mode == NormMode::Standard) {
        s.norm_lo = lo;
        s.norm_hi = hi;
      }
    }
    if (!norm.empty()) {
      auto [lo, hi] = parse_range(std::string(prefix) + "-norm", norm);
      s.norm_lo = lo;
      s.norm_hi = hi;
    }
    try {
      s.validate();
    } catch (const Error& e) {
      throw UsageError(std::string(prefix) + " alignment flags: " + e.what());
    }
    return s;
  }
};

bool looks_like_caft(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  return in && std::memcmp(magic, "CAFT", 4) == 0;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string arch, dims, out;
  uint64_t count = 0;
  uint32_t classes = 1;
  double noise = 1.0, centroid_scale = 2.0;
  uint64_t seed = 0;
};

int run_gen(const GenArgs& a) {
  GenSpec spec;
  auto arch = arch_from_name(a.arch);
  if (!arch || *arch == Arch::Unknown) throw UsageError("--arch: expected cnn|vit, got '" + a.arch + "'");
  spec.arch = *arch;
  spec.dims = parse_dims(a.dims);
  size_t want = spec.arch == Arch::CnnLike ? 3 : 2;
  if (spec.dims.size() != want) {
    throw UsageError("--dims: arch '" + a.arch + "' needs " + std::to_string(want) +
                     " components, got " + std::to_string(spec.dims.size()));
  }
  if (a.count < 1) throw UsageError("--count: must be >= 1");
  spec.n_classes = a.classes;
  spec.noise_scale = a.noise;
  spec.centroid_scale = a.centroid_scale;
  spec.seed = a.seed;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  DatasetManifest m = gen_dataset(spec, a.count, a.out);
  write_caft(class_centroids_tensor(spec), std::filesystem::path(a.out) / "centroids.caft");
  say("wrote " + std::to_string(m.entries.size()) + " features + manifest + centroids to " + a.out);
  return 0;
}

struct MergeArgs {
  std::vector<std::string> manifests;
  std::string out;
};

int run_merge(const MergeArgs& a) {
  std::vector<std::filesystem::path> paths(a.manifests.begin(), a.manifests.end());
  std::filesystem::path out(a.out);
  auto root = out.has_parent_path() ? out.parent_path() : std::filesystem::path(".");
  DatasetManifest merged = merge_manifests(paths, root);
  save_manifest(merged, out);
  say("merged " + std::to_string(merged.entries.size()) + " entries into " + a.out);
  return 0;
}

struct TrainArgs {
  std::string manifest, out, log, ratio;
  double lambda = 0.0;
  bool preset_specs = false;
  SpecFlags specs;
  double lr_init = 1e-4, lr_min = 1e-8, plateau_factor = 0.5;
  int patience = 20, batch_size = 8, max_epochs = 100000;
  int val_cnn = 100, val_vit = 100;
  uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  TrainingConfig cfg;
  cfg.lambda = a.lambda;
  cfg.ratio_cnn_to_vit = a.ratio.empty() ? recommended_ratio(a.lambda) : parse_ratio(a.ratio);
  cfg.lr_init = a.lr_init;
  cfg.lr_min = a.lr_min;
  cfg.plateau_factor = a.plateau_factor;
  cfg.plateau_patience = a.patience;
  cfg.batch_size = a.batch_size;
  cfg.max_epochs = a.max_epochs;
  cfg.val_counts = {a.val_cnn, a.val_vit};
  cfg.seed = a.seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  AlignmentSpec cnn_spec = a.specs.resolve(Arch::CnnLike);
  AlignmentSpec vit_spec = a.specs.resolve(Arch::VitLike);

  DatasetManifest manifest = load_manifest(a.manifest);
  TrainResult r = train(CodecModel::init(cfg.seed), manifest, cfg, cnn_spec, vit_spec);
  save_model(r.model, a.out);
  if (!a.log.empty()) write_text_atomic(a.log, training_log_csv(r.log));
  char line[160];
  std::snprintf(line, sizeof(line), "trained %zu epochs, best val loss %.6g (epoch %d), model %s",
                r.log.size(), r.best_val_loss, r.best_epoch, a.out.c_str());
  say(line);
  return 0;
}

struct CodeArgs {
  std::string model, input, out, spec_preset = "auto";
  SpecFlags specs;
  double lambda = 0.0;     // eval only
  std::vector<std::string> centroids;  // eval only
};

AlignmentSpec spec_for(const CodeArgs& a, Arch arch) {
  if (a.spec_preset == "vit-default") return AlignmentSpec::vit_default();
  if (a.spec_preset == "cnn-default") return AlignmentSpec::cnn_default();
  if (a.spec_preset == "auto") {
    return a.specs.resolve(arch == Arch::Unknown ? Arch::VitLike : arch);
  }
  throw UsageError("--spec-preset: expected vit-default|cnn-default|auto, got '" + a.spec_preset +
                   "'");
}

int run_encode(const CodeArgs& a) {
  CodecModel model = load_model(a.model);
  std::filesystem::path input(a.input);
  if (!std::filesystem::exists(input)) throw UsageError("--input: no such file: " + a.input);

  if (looks_like_caft(input)) {
    FeatureTensor t = read_caft(input);
    EncodeStats stats;
    Bitstream b = encode(model, t, spec_for(a, t.arch), &stats);
    std::filesystem::path out = a.out.empty() ? input.string() + ".cafb" : a.out;
    write_bitstream(b, out);
    char line[200];
    std::snprintf(line, sizeof(line), "%s: %zu payload bits, bpfp %.6g, mse %.6g",
                  out.string().c_str(), stats.payload_bits, stats.bpfp(), stats.mse);
    say(line);
    return 0;
  }

  // Manifest mode: per-entry bitstreams into the output directory.
  DatasetManifest manifest = load_manifest(input);
  if (a.out.empty()) throw UsageError("--out: required when --input is a manifest");
  std::filesystem::path out_dir(a.out);
  std::vector<std::string> lines(manifest.entries.size());
  parallel_for(manifest.entries.size(), [&](size_t i) {
    FeatureTensor t = read_caft(manifest.resolve(i));
    EncodeStats stats;
    Bitstream b = encode(model, t, spec_for(a, manifest.entries[i].arch), &stats);
    std::filesystem::path rel(manifest.entries[i].path);
    rel.replace_extension(".cafb");
    write_bitstream(b, out_dir / rel);
    char line[200];
    std::snprintf(line, sizeof(line), "%s: %zu payload bits, bpfp %.6g, mse %.6g",
                  (out_dir / rel).string().c_str(), stats.payload_bits, stats.bpfp(), stats.mse);
    lines[i] = line;
  });
  for (const auto& l : lines) say(l);
  return 0;
}

int run_decode(const CodeArgs& a) {
  CodecModel model = load_model(a.model);
  Bitstream b = read_bitstream(a.input);
  FeatureTensor t = decode(model, b);
  if (a.out.empty()) throw UsageError("--out: required for decode");
  write_caft(t, a.out);
  say("decoded " + a.input + " -> " + a.out);
  return 0;
}

int run_eval(const CodeArgs& a) {
  CodecModel model = load_model(a.model);
  DatasetManifest manifest = load_manifest(a.input);
  if (manifest.entries.empty()) throw UsageError("--manifest: empty dataset");
  if (a.lambda <= 0.0) throw UsageError("--lambda: required (tags the emitted records)");

  // --centroids PATH applies everywhere; --centroids cnn=P vit=P are
  // architecture-specific.
  std::map<Arch, std::vector<std::vector<float>>> centroid_map;
  for (const auto& spec : a.centroids) {
    std::string target = "all", path = spec;
    size_t eq = spec.find('=');
    if (eq != std::string::npos) {
      target = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    FeatureTensor c = read_caft(path);
    if (c.layout != Layout::Tokens2D) throw UsageError("--centroids: expected a 2D centroid file");
    std::vector<std::vector<float>> rows(c.dims[0], std::vector<float>(c.dims[1]));
    for (uint32_t k = 0; k < c.dims[0]; ++k) {
      std::copy(c.data.begin() + static_cast<size_t>(k) * c.dims[1],
                c.data.begin() + static_cast<size_t>(k + 1) * c.dims[1], rows[k].begin());
    }
    if (target == "all") {
      centroid_map[Arch::CnnLike] = rows;
      centroid_map[Arch::VitLike] = rows;
    } else if (auto arch = arch_from_name(target); arch && *arch != Arch::Unknown) {
      centroid_map[*arch] = std::move(rows);
    } else {
      throw UsageError("--centroids: bad target '" + target + "' (use cnn=/vit= or a bare path)");
    }
  }
  if (centroid_map.empty()) throw UsageError("--centroids: at least one centroid file is required");

  struct PerFeature {
    Arch arch;
    size_t bits = 0;
    size_t numel = 0;
    double se = 0.0;
    std::vector<float> pooled;
    uint32_t label = 0;
  };
  std::vector<PerFeature> rows(manifest.entries.size());
  parallel_for(manifest.entries.size(), [&](size_t i) {
    const auto& e = manifest.entries[i];
    if (!e.label) fail("eval: manifest entry " + e.path + " has no label");
    FeatureTensor t = read_caft(manifest.resolve(i));
    EncodeStats stats;
    Bitstream b = encode(model, t, spec_for(a, e.arch), &stats);
    FeatureTensor rec = decode(model, b);
    PerFeature& r = rows[i];
    r.arch = e.arch;
    r.bits = stats.payload_bits;
    r.numel = stats.numel;
    r.se = stats.mse * static_cast<double>(stats.numel);
    r.pooled = pool_tokens(tokenize(rec));
    r.label = *e.label;
  });

  std::vector<RDRecord> records;
  for (Arch arch : {Arch::CnnLike, Arch::VitLike, Arch::Unknown}) {
    std::vector<std::vector<float>> pooled;
    std::vector<uint32_t> labels;
    size_t bits = 0, numel = 0, n = 0;
    double se = 0.0;
    for (const auto& r : rows) {
      if (r.arch != arch) continue;
      pooled.push_back(r.pooled);
      labels.push_back(r.label);
      bits += r.bits;
      numel += r.numel;
      se += r.se;
      ++n;
    }
    if (n == 0) continue;
    auto it = centroid_map.find(arch);
    if (it == centroid_map.end()) {
      throw UsageError("--centroids: no centroid file covers arch '" + std::string(arch_name(arch)) +
                       "'");
    }
    RDRecord rec;
    rec.lambda = a.lambda;
    rec.arch = arch;
    rec.bpfp = static_cast<double>(bits) / static_cast<double>(numel);
    rec.mse = se / static_cast<double>(numel);
    rec.accuracy = nearest_centroid_accuracy(pooled, labels, it->second);
    rec.n_features = n;
    records.push_back(rec);
  }

  if (a.out.empty()) throw UsageError("--out: required for eval");
  write_text_atomic(a.out, rd_records_csv(records));
  say("wrote " + std::to_string(records.size()) + " records to " + a.out);
  return 0;
}

struct CurveArgs {
  std::vector<std::string> records;
  std::string out_csv, out_svg;
};

int run_curve(const CurveArgs& a) {
  std::vector<RDRecord> all;
  for (const auto& path : a.records) {
    auto bytes = read_file(path);
    auto parsed = parse_rd_records_csv(std::string(bytes.begin(), bytes.end()));
    all.insert(all.end(), parsed.begin(), parsed.end());
  }
  if (all.empty()) throw UsageError("--records: no records found");
  rd_curve(all, a.out_csv, a.out_svg);
  say("wrote " + a.out_csv + " and " + a.out_svg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-architecture universal feature codec"};
  app.require_subcommand(1);
  app.add_flag("--quiet", g_quiet, "suppress status output");

  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic feature dataset");
  gen_cmd->add_option("--arch", gen_args.arch, "architecture (cnn|vit)")->required();
  gen_cmd->add_option("--dims", gen_args.dims, "dims, e.g. 2048x7x7 or 257x1536")->required();
  gen_cmd->add_option("--count", gen_args.count, "number of features")->required();
  gen_cmd->add_option("--classes", gen_args.classes, "number of classes");
  gen_cmd->add_option("--noise", gen_args.noise, "noise scale multiplier");
  gen_cmd->add_option("--centroid-scale", gen_args.centroid_scale, "class centroid scale");
  gen_cmd->add_option("--seed", gen_args.seed, "generator seed");
  gen_cmd->add_option("--out", gen_args.out, "output directory")->required();

  MergeArgs merge_args;
  auto* merge_cmd = app.add_subcommand("merge", "merge dataset manifests");
  merge_cmd->add_option("manifests", merge_args.manifests, "input manifest files")->required();
  merge_cmd->add_option("--out", merge_args.out, "output manifest path")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a codec on a mixed dataset");
  train_cmd->add_option("--manifest", train_args.manifest, "dataset manifest")->required();
  train_cmd->add_option("--lambda", train_args.lambda, "rate-distortion trade-off")->required();
  train_cmd->add_option("--ratio", train_args.ratio, "cnn:vit sampling ratio (default: paired to lambda)");
  train_cmd->add_flag("--preset-specs", train_args.preset_specs,
                      "use the default per-architecture alignment presets");
  train_args.specs.add_to(train_cmd);
  train_cmd->add_option("--out", train_args.out, "output model file")->required();
  train_cmd->add_option("--log", train_args.log, "training log CSV");
  train_cmd->add_option("--lr-init", train_args.lr_init, "initial learning rate");
  train_cmd->add_option("--lr-min", train_args.lr_min, "terminal learning rate");
  train_cmd->add_option("--plateau-factor", train_args.plateau_factor, "lr reduction factor");
  train_cmd->add_option("--patience", train_args.patience, "plateau patience (epochs)");
  train_cmd->add_option("--batch-size", train_args.batch_size, "features per step");
  train_cmd->add_option("--max-epochs", train_args.max_epochs, "hard epoch cap");
  train_cmd->add_option("--val-cnn", train_args.val_cnn, "held-out cnn features");
  train_cmd->add_option("--val-vit", train_args.val_vit, "held-out vit features");
  train_cmd->add_option("--seed", train_args.seed, "training seed");

  CodeArgs encode_args;
  auto* encode_cmd = app.add_subcommand("encode", "compress a feature file or manifest");
  encode_cmd->add_option("--model", encode_args.model, "codec model file")->required();
  encode_cmd->add_option("--input", encode_args.input, "CAFT file or manifest")->required();
  encode_cmd->add_option("--out", encode_args.out, "output file or directory");
  encode_cmd->add_option("--spec-preset", encode_args.spec_preset,
                         "alignment preset (vit-default|cnn-default|auto)");
  encode_args.specs.add_to(encode_cmd);

  CodeArgs decode_args;
  auto* decode_cmd = app.add_subcommand("decode", "decompress a bitstream");
  decode_cmd->add_option("--model", decode_args.model, "codec model file")->required();
  decode_cmd->add_option("--input", decode_args.input, "CAFB bitstream")->required();
  decode_cmd->add_option("--out", decode_args.out, "output CAFT file")->required();

  CodeArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "rate/distortion/accuracy over a dataset");
  eval_cmd->add_option("--model", eval_args.model, "codec model file")->required();
  eval_cmd->add_option("--manifest", eval_args.input, "dataset manifest")->required();
  eval_cmd->add_option("--centroids", eval_args.centroids,
                       "centroid file, optionally cnn=PATH / vit=PATH")->required();
  eval_cmd->add_option("--lambda", eval_args.lambda, "lambda tag for the records")->required();
  eval_cmd->add_option("--out", eval_args.out, "output records CSV")->required();
  eval_cmd->add_option("--spec-preset", eval_args.spec_preset,
                       "alignment preset (vit-default|cnn-default|auto)");
  eval_args.specs.add_to(eval_cmd);

  CurveArgs curve_args;
  auto* curve_cmd = app.add_subcommand("curve", "combine record CSVs into a curve CSV + SVG");
  curve_cmd->add_option("--records", curve_args.records, "input record CSVs")->required();
  curve_cmd->add_option("--out-csv", curve_args.out_csv, "combined CSV")->required();
  curve_cmd->add_option("--out-svg", curve_args.out_svg, "curve SVG")->required();

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return run_gen(gen_args);
    if (merge_cmd->parsed()) return run_merge(merge_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (encode_cmd->parsed()) return run_encode(encode_args);
    if (decode_cmd->parsed()) return run_decode(decode_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (curve_cmd->parsed()) return run_curve(curve_args);
    std::fprintf(stderr, "error: no subcommand\n");
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
