#include "caufc/codec/model.hpp"

#include <cmath>

namespace caufc {

namespace {

// Layer kinds in the CAFM layer table.
enum class LayerKind : uint8_t {
  Analysis = 0,
  HyperAnalysis = 1,
  HyperSynthesis = 2,
  Synthesis = 3,
  Factorized = 4,
};

Conv make_conv(int in_ch, int out_ch, int kernel, int stride, SplitMix& rng) {
  Conv c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kernel = kernel;
  c.stride = stride;
  c.w.resize(static_cast<size_t>(out_ch) * in_ch * kernel * kernel);
  c.b.assign(static_cast<size_t>(out_ch), 0.0f);
  // Glorot-uniform fan scaling keeps early activations O(1).
  double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  double fan_out = static_cast<double>(out_ch) * kernel * kernel;
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : c.w) v = static_cast<float>(limit * (2.0 * rng.next_unit() - 1.0));
  return c;
}

void append_params(std::vector<uint8_t>& out, const std::vector<float>& arr) {
  for (float v : arr) put_f32(out, v);
}

}  // namespace

std::vector<const std::vector<float>*> CodecModel::param_arrays() const {
  std::vector<const std::vector<float>*> out;
  auto add = [&](const std::vector<Conv>& layers) {
    for (const auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
  };
  add(analysis);
  add(hyper_analysis);
  add(hyper_synthesis);
  add(synthesis);
  out.push_back(&factorized.w);
  return out;
}

std::vector<std::vector<float>*> CodecModel::param_arrays() {
  std::vector<std::vector<float>*> out;
  auto add = [&](std::vector<Conv>& layers) {
    for (auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
  };
  add(analysis);
  add(hyper_analysis);
  add(hyper_synthesis);
  add(synthesis);
  out.push_back(&factorized.w);
  return out;
}

size_t CodecModel::param_count() const {
  size_t n = 0;
  for (const auto* arr : param_arrays()) n += arr->size();
  return n;
}

uint64_t CodecModel::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* arr : param_arrays()) {
    if (!arr->empty()) {
      h = fnv1a64(arr->data(), arr->size() * sizeof(float), h);
    }
  }
  return h;
}

CodecModel CodecModel::init(uint64_t seed) {
  SplitMix rng = SplitMix::stream(seed, 0x6d6f64656cull);
  CodecModel m;
  m.analysis.push_back(make_conv(1, 32, 5, 2, rng));
  m.analysis.push_back(make_conv(32, 32, 5, 2, rng));
  m.analysis.push_back(make_conv(32, 8, 5, 1, rng));

  m.hyper_analysis.push_back(make_conv(8, 16, 3, 2, rng));
  m.hyper_analysis.push_back(make_conv(16, 4, 3, 1, rng));

  m.hyper_synthesis.push_back(make_conv(4, 16, 3, 1, rng));
  m.hyper_synthesis.push_back(make_conv(16, 8, 3, 1, rng));
  m.hyper_synthesis[1].upsample = 2;

  m.synthesis.push_back(make_conv(8, 32, 5, 1, rng));
  m.synthesis.push_back(make_conv(32, 32, 5, 1, rng));
  m.synthesis.push_back(make_conv(32, 1, 5, 1, rng));
  m.synthesis[1].upsample = 2;
  m.synthesis[2].upsample = 2;

  m.factorized.channels = 4;
  m.factorized.radius = 30;
  m.factorized.spacing = 0.5;
  // Equal segment weights: uniform CDF, symmetric around zero.
  m.factorized.w.assign(static_cast<size_t>(m.factorized.channels) * m.factorized.segments(), 0.0f);
  return m;
}

std::vector<uint8_t> encode_model(const CodecModel& m) {
  std::vector<uint8_t> out;
  put_magic(out, "CAFM");
  put_u8(out, 1);  // version

  auto layer_row = [&](LayerKind kind, int in_ch, int out_ch, int kernel, int stride) {
    put_u8(out, static_cast<uint8_t>(kind));
    put_u16(out, static_cast<uint16_t>(in_ch));
    put_u16(out, static_cast<uint16_t>(out_ch));
    put_u8(out, static_cast<uint8_t>(kernel));
    put_u8(out, static_cast<uint8_t>(stride));
  };

  size_t layer_count = m.analysis.size() + m.hyper_analysis.size() + m.hyper_synthesis.size() +
                       m.synthesis.size() + 1;
  put_u8(out, static_cast<uint8_t>(layer_count));
  // Decoder-side rows reuse the stride column for their upsample factor;
  // their convolutions always run at stride 1.
  for (const auto& l : m.analysis) layer_row(LayerKind::Analysis, l.in_ch, l.out_ch, l.kernel, l.stride);
  for (const auto& l : m.hyper_analysis)
    layer_row(LayerKind::HyperAnalysis, l.in_ch, l.out_ch, l.kernel, l.stride);
  for (const auto& l : m.hyper_synthesis)
    layer_row(LayerKind::HyperSynthesis, l.in_ch, l.out_ch, l.kernel, l.upsample);
  for (const auto& l : m.synthesis)
    layer_row(LayerKind::Synthesis, l.in_ch, l.out_ch, l.kernel, l.upsample);
  // Factorized prior: in=channels, out=segments, kernel=radius,
  // stride=segments-per-unit (inverse knot spacing).
  layer_row(LayerKind::Factorized, m.factorized.channels, m.factorized.segments(),
            m.factorized.radius, static_cast<int>(std::lround(1.0 / m.factorized.spacing)));

  for (const auto* arr : m.param_arrays()) append_params(out, *arr);
  put_u64(out, m.hash());
  return out;
}

CodecModel decode_model(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!(magic[0] == 'C' && magic[1] == 'A' && magic[2] == 'F' && magic[3] == 'M')) {
    fail("bad magic: not a CAFM model file");
  }
  if (r.u8("version") != 1) fail("unsupported CAFM version");

  CodecModel m;
  uint8_t layer_count = r.u8("layer count");
  bool factorized_seen = false;
  for (uint8_t i = 0; i < layer_count; ++i) {
    uint8_t kind = r.u8("layer kind");
    int in_ch = r.u16("in channels");
    int out_ch = r.u16("out channels");
    int kernel = r.u8("kernel");
    int stride = r.u8("stride");
    if (kind == static_cast<uint8_t>(LayerKind::Factorized)) {
      m.factorized.channels = in_ch;
      m.factorized.radius = kernel;
      if (stride <= 0) fail("model: bad factorized spacing");
      m.factorized.spacing = 1.0 / stride;
      m.factorized.w.resize(static_cast<size_t>(in_ch) * out_ch);
      if (out_ch != m.factorized.segments()) fail("model: factorized segment count mismatch");
      factorized_seen = true;
      continue;
    }
    Conv c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel = kernel;
    c.w.resize(static_cast<size_t>(out_ch) * in_ch * kernel * kernel);
    c.b.resize(static_cast<size_t>(out_ch));
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::Analysis:
        c.stride = stride;
        m.analysis.push_back(std::move(c));
        break;
      case LayerKind::HyperAnalysis:
        c.stride = stride;
        m.hyper_analysis.push_back(std::move(c));
        break;
      case LayerKind::HyperSynthesis:
        c.upsample = stride;
        m.hyper_synthesis.push_back(std::move(c));
        break;
      case LayerKind::Synthesis:
        c.upsample = stride;
        m.synthesis.push_back(std::move(c));
        break;
      default: fail("model: unknown layer kind " + std::to_string(kind));
    }
  }
  if (!factorized_seen) fail("model: missing factorized prior layer");

  for (auto* arr : m.param_arrays()) {
    for (auto& v : *arr) v = r.f32("parameter");
  }
  uint64_t stored_hash = r.u64("model hash");
  if (r.remaining() != 0) fail("model: trailing bytes");
  uint64_t computed = m.hash();
  if (stored_hash != computed) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx vs stored %016llx",
                  static_cast<unsigned long long>(computed),
                  static_cast<unsigned long long>(stored_hash));
    fail(std::string("model hash mismatch (corrupt file): computed ") + buf);
  }
  return m;
}

void save_model(const CodecModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_model(m));
}

CodecModel load_model(const std::filesystem::path& path) {
  return decode_model(read_file(path));
}

}  // namespace caufc
