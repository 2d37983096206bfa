#include "caufc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace caufc {

double bpfp(const Bitstream& b, const FeatureTensor& original) {
  return static_cast<double>(b.payload_bits()) / static_cast<double>(original.element_count());
}

double ks_distance(std::span<const float> a, std::span<const float> b) {
  if (a.empty() || b.empty()) fail("ks_distance: empty sample");
  std::vector<float> sa(a.begin(), a.end());
  std::vector<float> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  // Sweep the merged order; the sup gap can only change at sample points.
  double na = static_cast<double>(sa.size());
  double nb = static_cast<double>(sb.size());
  size_t ia = 0, ib = 0;
  double best = 0.0;
  while (ia < sa.size() && ib < sb.size()) {
    float v = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= v) ++ia;
    while (ib < sb.size() && sb[ib] <= v) ++ib;
    best = std::max(best, std::abs(ia / na - ib / nb));
  }
  return best;
}

std::vector<float> pool_tokens(const TokenMatrix& m) {
  m.validate();
  std::vector<double> acc(m.cols, 0.0);
  for (uint32_t r = 0; r < m.rows; ++r) {
    for (uint32_t c = 0; c < m.cols; ++c) acc[c] += m.at(r, c);
  }
  std::vector<float> out(m.cols);
  for (uint32_t c = 0; c < m.cols; ++c) {
    out[c] = static_cast<float>(acc[c] / static_cast<double>(m.rows));
  }
  return out;
}

double nearest_centroid_accuracy(const std::vector<std::vector<float>>& pooled,
                                 const std::vector<uint32_t>& labels,
                                 const std::vector<std::vector<float>>& centroids) {
  if (pooled.size() != labels.size()) fail("nearest_centroid_accuracy: features/labels length mismatch");
  if (pooled.empty()) fail("nearest_centroid_accuracy: empty feature set");
  for (uint32_t l : labels) {
    if (l >= centroids.size()) {
      fail("nearest_centroid_accuracy: label " + std::to_string(l) + " has no centroid");
    }
  }
  size_t hits = 0;
  for (size_t i = 0; i < pooled.size(); ++i) {
    const auto& f = pooled[i];
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < centroids.size(); ++k) {
      const auto& c = centroids[k];
      if (c.size() != f.size()) fail("nearest_centroid_accuracy: centroid dimension mismatch");
      double d = 0.0;
      for (size_t j = 0; j < f.size(); ++j) {
        double diff = static_cast<double>(f[j]) - static_cast<double>(c[j]);
        d += diff * diff;
      }
      if (d < best_d) {  // strict: ties keep the lowest class id
        best_d = d;
        best = k;
      }
    }
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pooled.size());
}

double mean_abs(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += std::abs(v);
  return sum / static_cast<double>(values.size());
}

double latent_concentration(const CodecModel& model, const DatasetManifest& manifest,
                            const AlignmentSpec& cnn_spec, const AlignmentSpec& vit_spec) {
  if (manifest.entries.empty()) fail("latent_concentration: empty manifest");
  std::vector<double> sums(manifest.entries.size(), 0.0);
  std::vector<size_t> counts(manifest.entries.size(), 0);
  parallel_for(manifest.entries.size(), [&](size_t i) {
    FeatureTensor t = read_caft(manifest.resolve(i));
    const AlignmentSpec& spec = manifest.entries[i].arch == Arch::CnnLike ? cnn_spec : vit_spec;
    ForwardResult r = forward(model, align(t, spec), QuantMode::EvalRound);
    double s = 0.0;
    for (double v : r.y_hat.v) s += std::abs(v);
    sums[i] = s;
    counts[i] = r.y_hat.count();
  });
  double total = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < sums.size(); ++i) {
    total += sums[i];
    n += counts[i];
  }
  return total / static_cast<double>(n);
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t at = s.find(sep, start);
    if (at == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, at - start));
    start = at + 1;
  }
  return out;
}

constexpr const char* kCsvHeader = "lambda,arch,bpfp,mse,accuracy,n";

}  // namespace

std::string rd_records_csv(const std::vector<RDRecord>& records) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << fmt(r.lambda) << ',' << arch_name(r.arch) << ',' << fmt(r.bpfp) << ',' << fmt(r.mse)
        << ',' << fmt(r.accuracy) << ',' << r.n_features << '\n';
  }
  return out.str();
}

std::vector<RDRecord> parse_rd_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<RDRecord> out;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == kCsvHeader) continue;
    auto fields = split(line, ',');
    if (fields.size() != 6) {
      fail("rd csv line " + std::to_string(line_no) + ": expected 6 fields");
    }
    RDRecord r;
    try {
      r.lambda = std::stod(fields[0]);
      auto arch = arch_from_name(fields[1]);
      if (!arch) throw std::invalid_argument("arch");
      r.arch = *arch;
      r.bpfp = std::stod(fields[2]);
      r.mse = std::stod(fields[3]);
      r.accuracy = std::stod(fields[4]);
      r.n_features = std::stoull(fields[5]);
    } catch (const std::exception&) {
      fail("rd csv line " + std::to_string(line_no) + ": malformed record");
    }
    out.push_back(r);
  }
  return out;
}

void rd_curve(const std::vector<RDRecord>& records, const std::filesystem::path& csv_path,
              const std::filesystem::path& svg_path) {
  if (records.empty()) fail("rd_curve: need at least one record");
  write_text_atomic(csv_path, rd_records_csv(records));

  // Group per architecture and sort each series by bpfp.
  std::vector<Arch> archs;
  for (const auto& r : records) {
    if (std::find(archs.begin(), archs.end(), r.arch) == archs.end()) archs.push_back(r.arch);
  }
  double min_x = records[0].bpfp, max_x = records[0].bpfp;
  double min_y = records[0].accuracy, max_y = records[0].accuracy;
  for (const auto& r : records) {
    min_x = std::min(min_x, r.bpfp);
    max_x = std::max(max_x, r.bpfp);
    min_y = std::min(min_y, r.accuracy);
    max_y = std::max(max_y, r.accuracy);
  }
  double span_x = max_x - min_x, span_y = max_y - min_y;
  if (span_x <= 0.0) span_x = 1.0;
  if (span_y <= 0.0) span_y = 1.0;

  // Fixed 800x600 canvas with a 70px margin; y axis grows upward.
  const double kw = 800.0, kh = 600.0, margin = 70.0;
  auto px = [&](double bp) { return margin + (bp - min_x) / span_x * (kw - 2 * margin); };
  auto py = [&](double acc) { return kh - margin - (acc - min_y) / span_y * (kh - 2 * margin); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
  svg << "<line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(kh - margin) << "\" x2=\""
      << fmt(kw - margin) << "\" y2=\"" << fmt(kh - margin) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(margin) << "\" y1=\"" << fmt(margin) << "\" x2=\"" << fmt(margin)
      << "\" y2=\"" << fmt(kh - margin) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << fmt(kw / 2) << "\" y=\"" << fmt(kh - margin / 3)
      << "\" text-anchor=\"middle\" font-size=\"16\">bits per feature point</text>\n";
  svg << "<text x=\"" << fmt(margin / 3) << "\" y=\"" << fmt(kh / 2)
      << "\" text-anchor=\"middle\" font-size=\"16\" transform=\"rotate(-90 " << fmt(margin / 3)
      << " " << fmt(kh / 2) << ")\">accuracy</text>\n";

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
  for (Arch a : archs) {
    std::vector<RDRecord> series;
    for (const auto& r : records) {
      if (r.arch == a) series.push_back(r);
    }
    std::stable_sort(series.begin(), series.end(),
                     [](const RDRecord& l, const RDRecord& r) { return l.bpfp < r.bpfp; });
    svg << "<polyline fill=\"none\" stroke=\"" << colors[static_cast<int>(a) % 3]
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < series.size(); ++i) {
      if (i) svg << ' ';
      svg << fmt(px(series[i].bpfp)) << ',' << fmt(py(series[i].accuracy));
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << fmt(kw - margin + 6) << "\" y=\""
        << fmt(py(series.back().accuracy)) << "\" font-size=\"14\">" << arch_name(a)
        << "</text>\n";
  }
  svg << "</svg>\n";
  write_text_atomic(svg_path, svg.str());
}

}  // namespace caufc
