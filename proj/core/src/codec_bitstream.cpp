#include "caufc/codec/bitstream.hpp"

#include <algorithm>
#include <cmath>

#include "caufc/entropy/range_coder.hpp"
#include "codec_math.hpp"

namespace caufc {

using namespace detail;
using entropy::CdfTable;

namespace {

std::vector<CdfTable> hyper_tables(const CodecModel& model) {
  FactorizedWork work(model.factorized);
  const int radius = model.factorized.radius;
  std::vector<CdfTable> tables;
  tables.reserve(model.factorized.channels);
  std::vector<double> probs(static_cast<size_t>(2 * radius + 1));
  for (int ch = 0; ch < model.factorized.channels; ++ch) {
    for (int s = -radius; s <= radius; ++s) {
      double p = work.eval(ch, s + 0.5).cdf - work.eval(ch, s - 0.5).cdf;
      probs[static_cast<size_t>(s + radius)] = std::max(p, kMinLikelihood);
    }
    tables.push_back(entropy::build_table(probs, -radius));
  }
  return tables;
}

CdfTable gaussian_table(double sigma) {
  int radius = gaussian_support_radius(sigma);
  std::vector<double> probs(static_cast<size_t>(2 * radius + 1));
  for (int s = -radius; s <= radius; ++s) {
    probs[static_cast<size_t>(s + radius)] =
        std::max(gaussian_bin_prob(static_cast<double>(s), sigma), kMinLikelihood);
  }
  return entropy::build_table(probs, -radius);
}

std::vector<int32_t> grid_symbols(const Grid& g) {
  std::vector<int32_t> out(g.count());
  for (size_t i = 0; i < g.count(); ++i) out[i] = static_cast<int32_t>(std::lround(g.v[i]));
  return out;
}

FeatureTensor reconstruct(const CodecModel& model, const Grid& y_hat, const Bitstream& b) {
  TokenMatrix tokens = synthesize_tokens(model, y_hat, b.token_rows, b.token_cols);
  if (b.layout == Layout::ChannelMajor3D) {
    tokens.cnn_origin = CnnShape{b.dims[0], b.dims[1], b.dims[2]};
  } else {
    tokens.cnn_origin = std::nullopt;
  }
  // Synthesis output is unbounded; pin it to the normalized image of the
  // truncation range (the upper half of [0,1] for shifted specs) before
  // undoing the value alignment.
  const double width = b.spec.norm_hi - b.spec.norm_lo;
  const float lo = static_cast<float>((b.spec.trunc_lo - b.spec.norm_lo) / width);
  const float hi = static_cast<float>((b.spec.trunc_hi - b.spec.norm_lo) / width);
  for (float& v : tokens.data) v = std::clamp(v, lo, hi);
  return unalign(tokens, b.spec);
}

}  // namespace

Grid scales_from_hyper(const CodecModel& model, const Grid& z_hat, int y_rows, int y_cols) {
  Grid s1, t1, u1, raw;
  conv_forward(z_hat, model.hyper_synthesis[0], s1);
  t1.ch = s1.ch;
  t1.rows = s1.rows;
  t1.cols = s1.cols;
  t1.v.resize(s1.v.size());
  for (size_t i = 0; i < s1.v.size(); ++i) t1.v[i] = leaky(s1.v[i]);
  upsample2(t1, u1);
  conv_forward(u1, model.hyper_synthesis[1], raw);

  Grid sigma;
  sigma.resize(raw.ch, y_rows, y_cols);
  for (int c = 0; c < raw.ch; ++c) {
    for (int y = 0; y < y_rows; ++y) {
      for (int x = 0; x < y_cols; ++x) {
        sigma.at(c, y, x) = CodecModel::kScaleFloor + softplus(raw.at(c, y, x));
      }
    }
  }
  return sigma;
}

TokenMatrix synthesize_tokens(const CodecModel& model, const Grid& y_hat, int rows, int cols) {
  Grid d1, e1, v1, d2, e2, v2, xh;
  conv_forward(y_hat, model.synthesis[0], d1);
  e1.ch = d1.ch;
  e1.rows = d1.rows;
  e1.cols = d1.cols;
  e1.v.resize(d1.v.size());
  for (size_t i = 0; i < d1.v.size(); ++i) e1.v[i] = leaky(d1.v[i]);
  upsample2(e1, v1);
  conv_forward(v1, model.synthesis[1], d2);
  e2.ch = d2.ch;
  e2.rows = d2.rows;
  e2.cols = d2.cols;
  e2.v.resize(d2.v.size());
  for (size_t i = 0; i < d2.v.size(); ++i) e2.v[i] = leaky(d2.v[i]);
  upsample2(e2, v2);
  conv_forward(v2, model.synthesis[2], xh);

  TokenMatrix out;
  out.rows = static_cast<uint32_t>(rows);
  out.cols = static_cast<uint32_t>(cols);
  out.data.resize(static_cast<size_t>(rows) * cols);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      out.data[static_cast<size_t>(y) * cols + x] = static_cast<float>(xh.at(0, y, x));
    }
  }
  return out;
}

std::vector<uint8_t> encode_bitstream(const Bitstream& b) {
  std::vector<uint8_t> out;
  put_magic(out, "CAFB");
  put_u8(out, kBitstreamVersion);
  put_u64(out, b.model_hash);
  b.spec.serialize(out);
  put_u8(out, static_cast<uint8_t>(b.layout));
  for (uint32_t d : b.dims) put_u32(out, d);
  put_u16(out, b.token_rows);
  put_u16(out, b.token_cols);
  if (b.z_payload.size() > 0xFFFFFFFFull || b.y_payload.size() > 0xFFFFFFFFull) {
    fail("bitstream: payload too large for container");
  }
  put_u32(out, static_cast<uint32_t>(b.z_payload.size()));
  out.insert(out.end(), b.z_payload.begin(), b.z_payload.end());
  put_u32(out, static_cast<uint32_t>(b.y_payload.size()));
  out.insert(out.end(), b.y_payload.begin(), b.y_payload.end());
  return out;
}

Bitstream decode_bitstream(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!(magic[0] == 'C' && magic[1] == 'A' && magic[2] == 'F' && magic[3] == 'B')) {
    fail("bad magic: not a CAFB bitstream");
  }
  if (r.u8("version") != kBitstreamVersion) fail("unsupported CAFB version");

  Bitstream b;
  b.model_hash = r.u64("model hash");
  b.spec = AlignmentSpec::deserialize(r);
  uint8_t layout_raw = r.u8("layout");
  if (layout_raw > 1) fail("bitstream: bad layout byte");
  b.layout = static_cast<Layout>(layout_raw);
  size_t ndims = b.layout == Layout::ChannelMajor3D ? 3 : 2;
  b.dims.resize(ndims);
  for (auto& d : b.dims) {
    d = r.u32("dim");
    if (d == 0) fail("bitstream: zero dimension");
  }
  b.token_rows = r.u16("token rows");
  b.token_cols = r.u16("token cols");
  uint32_t z_len = r.u32("z payload length");
  b.z_payload = r.bytes(z_len, "z payload");
  uint32_t y_len = r.u32("y payload length");
  b.y_payload = r.bytes(y_len, "y payload");
  if (r.remaining() != 0) fail("bitstream: trailing bytes");
  return b;
}

void write_bitstream(const Bitstream& b, const std::filesystem::path& path) {
  write_file_atomic(path, encode_bitstream(b));
}

Bitstream read_bitstream(const std::filesystem::path& path) {
  return decode_bitstream(read_file(path));
}

Bitstream encode(const CodecModel& model, const FeatureTensor& t, const AlignmentSpec& spec,
                 EncodeStats* stats) {
  TokenMatrix aligned = align(t, spec);
  if (aligned.rows > 0xFFFF || aligned.cols > 0xFFFF) {
    fail("encode: token matrix exceeds the container's 16-bit shape fields");
  }

  ForwardResult fr = forward(model, aligned, QuantMode::EvalRound);

  Bitstream b;
  b.model_hash = model.hash();
  b.spec = spec;
  b.layout = t.layout;
  b.dims = t.dims;
  b.token_rows = static_cast<uint16_t>(aligned.rows);
  b.token_cols = static_cast<uint16_t>(aligned.cols);

  // Hyper latent first: its tables depend only on the model.
  std::vector<CdfTable> z_tables = hyper_tables(model);
  std::vector<int32_t> z_syms = grid_symbols(fr.z_hat);
  const size_t z_plane = static_cast<size_t>(fr.z_hat.rows) * fr.z_hat.cols;
  b.z_payload = entropy::encode_symbols(
      z_syms, [&](size_t i) -> const CdfTable& { return z_tables[i / z_plane]; });

  // Main latent under per-element Gaussian tables derived from the scales.
  std::vector<int32_t> y_syms = grid_symbols(fr.y_hat);
  entropy::RangeEncoder enc;
  for (size_t i = 0; i < y_syms.size(); ++i) {
    enc.encode(y_syms[i], gaussian_table(fr.sigma.v[i]));
  }
  b.y_payload = enc.finish();

  if (stats) {
    stats->bits_estimate = fr.bits_estimate();
    stats->payload_bits = b.payload_bits();
    stats->numel = t.element_count();
    FeatureTensor rec = reconstruct(model, fr.y_hat, b);
    double se = 0.0;
    for (size_t i = 0; i < rec.data.size(); ++i) {
      double d = static_cast<double>(rec.data[i]) - static_cast<double>(t.data[i]);
      se += d * d;
    }
    stats->mse = se / static_cast<double>(rec.data.size());
  }
  return b;
}

FeatureTensor decode(const CodecModel& model, const Bitstream& b) {
  uint64_t have = model.hash();
  if (have != b.model_hash) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "model hash %016llx, bitstream expects %016llx",
                  static_cast<unsigned long long>(have),
                  static_cast<unsigned long long>(b.model_hash));
    fail(std::string("decode: model mismatch: ") + buf);
  }
  b.spec.validate();

  LatentShape shape = latent_shape(model, b.token_rows, b.token_cols);

  std::vector<CdfTable> z_tables = hyper_tables(model);
  const size_t z_plane = static_cast<size_t>(shape.z_rows) * shape.z_cols;
  std::vector<int32_t> z_syms =
      entropy::decode_symbols(b.z_payload, shape.z_count(),
                              [&](size_t i) -> const CdfTable& { return z_tables[i / z_plane]; });

  Grid z_hat;
  z_hat.resize(shape.z_ch, shape.z_rows, shape.z_cols);
  for (size_t i = 0; i < z_syms.size(); ++i) z_hat.v[i] = static_cast<double>(z_syms[i]);

  Grid sigma = scales_from_hyper(model, z_hat, shape.y_rows, shape.y_cols);

  entropy::RangeDecoder dec(b.y_payload);
  Grid y_hat;
  y_hat.resize(shape.y_ch, shape.y_rows, shape.y_cols);
  for (size_t i = 0; i < y_hat.count(); ++i) {
    y_hat.v[i] = static_cast<double>(dec.decode(gaussian_table(sigma.v[i])));
  }

  return reconstruct(model, y_hat, b);
}

}  // namespace caufc
