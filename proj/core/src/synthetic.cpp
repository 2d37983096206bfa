#include "caufc/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "caufc/alignment.hpp"

namespace caufc {

namespace {

constexpr uint64_t kCentroidTag = 0x63656e74ull;  // per-class centroid stream
constexpr uint64_t kNoiseTag = 0x6e6f6973ull;     // per-tensor noise stream

// Per-class centroid value for one element, drawn from its own stream so it
// is independent of dims iteration order or tensor index.
std::vector<float> class_centroid(const GenSpec& spec, uint32_t cls, size_t count) {
  SplitMix rng = SplitMix::stream(spec.seed, kCentroidTag ^ (static_cast<uint64_t>(cls) << 8));
  std::vector<float> c(count);
  for (auto& v : c) v = static_cast<float>(spec.centroid_scale * rng.next_gaussian());
  return c;
}

double vit_mixture_draw(const GenSpec& spec, SplitMix& rng) {
  double pick = rng.next_unit();
  double g = rng.next_gaussian();
  double sigma = pick < spec.vit_core_weight ? spec.vit_core_sigma : spec.vit_tail_sigma;
  return sigma * g;
}

}  // namespace

void GenSpec::validate() const {
  if (noise_scale < 0.0) fail("gen spec: noise_scale must be >= 0");
  if (n_classes < 1) fail("gen spec: n_classes must be >= 1");
  if (centroid_scale < 0.0) fail("gen spec: centroid_scale must be >= 0");
  size_t want = (arch == Arch::CnnLike) ? 3 : 2;
  if (arch == Arch::Unknown) fail("gen spec: arch must be cnn or vit");
  if (dims.size() != want) {
    fail("gen spec: arch " + std::string(arch_name(arch)) + " requires " + std::to_string(want) +
         " dims, got " + std::to_string(dims.size()));
  }
  for (uint32_t d : dims) {
    if (d == 0) fail("gen spec: zero-sized dimension");
  }
}

FeatureTensor gen_tensor(const GenSpec& spec, uint64_t index) {
  spec.validate();
  FeatureTensor t;
  t.arch = spec.arch;
  t.layout = (spec.arch == Arch::CnnLike) ? Layout::ChannelMajor3D : Layout::Tokens2D;
  t.dims = spec.dims;
  uint32_t cls = static_cast<uint32_t>(index % spec.n_classes);
  t.label = cls;

  size_t count = t.element_count();
  t.data.resize(count);

  // Centroids are defined in token space (one value per token column for
  // token layouts, one per channel for channel-major) broadcast over the
  // spatial/sequence axis: per-column attribute consistency.
  SplitMix noise = SplitMix::stream(spec.seed, kNoiseTag ^ index);

  if (spec.arch == Arch::CnnLike) {
    uint32_t n = spec.dims[0];
    size_t plane = static_cast<size_t>(spec.dims[1]) * spec.dims[2];
    std::vector<float> centroid = class_centroid(spec, cls, n);
    for (uint32_t c = 0; c < n; ++c) {
      float base = centroid[c];
      float* dst = t.data.data() + static_cast<size_t>(c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        double v = base + spec.noise_scale * spec.cnn_sigma * noise.next_gaussian();
        dst[i] = static_cast<float>(std::max(0.0, v));
      }
    }
  } else {
    uint32_t m = spec.dims[0], l = spec.dims[1];
    std::vector<float> centroid = class_centroid(spec, cls, l);
    for (uint32_t r = 0; r < m; ++r) {
      float* row = t.data.data() + static_cast<size_t>(r) * l;
      for (uint32_t c = 0; c < l; ++c) {
        row[c] = static_cast<float>(centroid[c] + spec.noise_scale * vit_mixture_draw(spec, noise));
      }
    }
  }
  return t;
}

FeatureTensor gen_cnn_like(const GenSpec& spec) {
  if (spec.arch != Arch::CnnLike) fail("gen_cnn_like: spec.arch must be cnn");
  return gen_tensor(spec, 0);
}

FeatureTensor gen_vit_like(const GenSpec& spec) {
  if (spec.arch != Arch::VitLike) fail("gen_vit_like: spec.arch must be vit");
  return gen_tensor(spec, 0);
}

DatasetManifest gen_dataset(const GenSpec& spec, uint64_t count, const std::filesystem::path& out_dir) {
  spec.validate();
  if (count < 1) fail("gen_dataset: count must be >= 1");
  std::filesystem::create_directories(out_dir);

  DatasetManifest m;
  m.root = out_dir;
  m.entries.resize(count);

  parallel_for(count, [&](size_t i) {
    FeatureTensor t = gen_tensor(spec, i);
    char name[32];
    std::snprintf(name, sizeof(name), "feat_%05zu.caft", i);
    write_caft(t, out_dir / name);
    m.entries[i] = ManifestEntry{name, t.arch, t.label};
  });

  save_manifest(m, out_dir / "manifest.txt");
  return m;
}

std::vector<std::vector<float>> class_centroids_pooled(const GenSpec& spec) {
  spec.validate();
  GenSpec noiseless = spec;
  noiseless.noise_scale = 0.0;
  std::vector<std::vector<float>> out(spec.n_classes);
  for (uint32_t k = 0; k < spec.n_classes; ++k) {
    TokenMatrix m = tokenize(gen_tensor(noiseless, k));  // index k has label k
    std::vector<float> pooled(m.cols, 0.0f);
    for (uint32_t r = 0; r < m.rows; ++r) {
      for (uint32_t c = 0; c < m.cols; ++c) pooled[c] += m.at(r, c);
    }
    for (auto& v : pooled) v /= static_cast<float>(m.rows);
    out[k] = std::move(pooled);
  }
  return out;
}

FeatureTensor class_centroids_tensor(const GenSpec& spec) {
  auto rows = class_centroids_pooled(spec);
  FeatureTensor t;
  t.layout = Layout::Tokens2D;
  t.arch = Arch::Unknown;
  t.dims = {static_cast<uint32_t>(rows.size()), static_cast<uint32_t>(rows[0].size())};
  t.data.reserve(t.element_count());
  for (const auto& r : rows) t.data.insert(t.data.end(), r.begin(), r.end());
  return t;
}

}  // namespace caufc
