#include "caufc/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace caufc {

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::CnnLike: return "cnn";
    case Arch::VitLike: return "vit";
    default: return "unknown";
  }
}

std::optional<Arch> arch_from_name(const std::string& s) {
  if (s == "cnn") return Arch::CnnLike;
  if (s == "vit") return Arch::VitLike;
  if (s == "unknown") return Arch::Unknown;
  return std::nullopt;
}

void FeatureTensor::validate() const {
  size_t want = layout == Layout::ChannelMajor3D ? 3 : 2;
  if (dims.size() != want) {
    fail("tensor layout/dims mismatch: layout expects " + std::to_string(want) +
         " dims, got " + std::to_string(dims.size()));
  }
  for (uint32_t d : dims) {
    if (d == 0) fail("tensor has a zero-sized dimension");
  }
  if (data.size() != element_count()) {
    fail("tensor data length " + std::to_string(data.size()) +
         " does not match dims product " + std::to_string(element_count()));
  }
  for (float v : data) {
    if (!std::isfinite(v)) fail("tensor contains a non-finite value");
  }
}

std::vector<uint8_t> encode_caft(const FeatureTensor& t) {
  t.validate();
  std::vector<uint8_t> out;
  out.reserve(16 + t.data.size() * 4);
  put_magic(out, "CAFT");
  put_u8(out, kCaftVersion);
  put_u8(out, static_cast<uint8_t>(t.layout));
  put_u8(out, static_cast<uint8_t>(t.arch));
  put_u8(out, static_cast<uint8_t>(t.dims.size()));
  for (uint32_t d : t.dims) put_u32(out, d);
  for (float v : t.data) put_f32(out, v);
  return out;
}

FeatureTensor decode_caft(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (!(magic[0] == 'C' && magic[1] == 'A' && magic[2] == 'F' && magic[3] == 'T')) {
    fail("bad magic: not a CAFT file");
  }
  uint8_t version = r.u8("version");
  if (version != kCaftVersion) fail("unsupported CAFT version " + std::to_string(version));
  uint8_t layout_raw = r.u8("layout");
  if (layout_raw > 1) fail("bad layout byte " + std::to_string(layout_raw));
  uint8_t arch_raw = r.u8("arch");
  if (arch_raw > 2) fail("bad arch byte " + std::to_string(arch_raw));
  uint8_t ndims = r.u8("ndims");

  FeatureTensor t;
  t.layout = static_cast<Layout>(layout_raw);
  t.arch = static_cast<Arch>(arch_raw);
  t.dims.resize(ndims);
  for (auto& d : t.dims) d = r.u32("dim");

  size_t want = (t.layout == Layout::ChannelMajor3D) ? 3 : 2;
  if (ndims != want) {
    fail("layout/ndims mismatch: layout expects " + std::to_string(want) + " dims, header has " +
         std::to_string(ndims));
  }
  size_t count = t.element_count();
  if (r.remaining() != count * 4) {
    fail("payload size mismatch: expected " + std::to_string(count * 4) + " bytes, found " +
         std::to_string(r.remaining()));
  }
  t.data.resize(count);
  for (auto& v : t.data) v = r.f32("payload");
  t.validate();
  return t;
}

void write_caft(const FeatureTensor& t, const std::filesystem::path& path) {
  write_file_atomic(path, encode_caft(t));
}

FeatureTensor read_caft(const std::filesystem::path& path) {
  return decode_caft(read_file(path));
}

namespace {

// Header-only check used by manifest validation: cheap and catches missing,
// foreign or truncated files without pulling payloads into memory.
void probe_caft(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) fail("cannot open: " + path.string());
  uint64_t file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  uint8_t header[8];
  if (file_size < 8 || !in.read(reinterpret_cast<char*>(header), 8)) {
    fail("file too small to be CAFT: " + path.string());
  }
  if (std::memcmp(header, "CAFT", 4) != 0) fail("bad magic: " + path.string());
  uint8_t ndims = header[7];
  std::vector<uint8_t> dim_bytes(static_cast<size_t>(ndims) * 4);
  if (!in.read(reinterpret_cast<char*>(dim_bytes.data()), static_cast<std::streamsize>(dim_bytes.size()))) {
    fail("truncated header: " + path.string());
  }
  uint64_t count = 1;
  for (uint8_t i = 0; i < ndims; ++i) {
    uint32_t d = 0;
    for (int b = 0; b < 4; ++b) d |= static_cast<uint32_t>(dim_bytes[i * 4 + b]) << (8 * b);
    count *= d;
  }
  uint64_t expected = 8 + dim_bytes.size() + count * 4;
  if (file_size != expected) {
    fail("payload size mismatch in " + path.string() + ": expected " + std::to_string(expected) +
         " bytes, file has " + std::to_string(file_size));
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: " + path.string());

  DatasetManifest m;
  m.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      fail("manifest line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
           std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.path = fields[0];
    auto arch = arch_from_name(fields[1]);
    if (!arch) fail("manifest line " + std::to_string(line_no) + ": unknown arch '" + fields[1] + "'");
    e.arch = *arch;
    if (fields[2] != "-") {
      try {
        size_t used = 0;
        long v = std::stol(fields[2], &used);
        if (used != fields[2].size() || v < 0) throw std::invalid_argument("neg");
        e.label = static_cast<uint32_t>(v);
      } catch (const std::exception&) {
        fail("manifest line " + std::to_string(line_no) + ": bad label '" + fields[2] + "'");
      }
    }
    try {
      probe_caft(m.root / e.path);
    } catch (const Error& err) {
      fail("manifest line " + std::to_string(line_no) + ": " + err.what());
    }
    m.entries.push_back(std::move(e));
  }

  // Labels, when present, must form a dense id range starting at 0.
  std::set<uint32_t> labels;
  for (const auto& e : m.entries) {
    if (e.label) labels.insert(*e.label);
  }
  if (!labels.empty()) {
    uint32_t expect = 0;
    for (uint32_t l : labels) {
      if (l != expect) fail("manifest labels are not dense from 0: missing class " + std::to_string(expect));
      ++expect;
    }
  }
  return m;
}

DatasetManifest merge_manifests(const std::vector<std::filesystem::path>& manifest_paths,
                                const std::filesystem::path& out_root) {
  DatasetManifest merged;
  merged.root = out_root;
  for (const auto& mp : manifest_paths) {
    DatasetManifest part = load_manifest(mp);
    for (const auto& e : part.entries) {
      std::error_code ec;
      auto rel = std::filesystem::relative(part.root / e.path, out_root, ec);
      if (ec || rel.empty()) {
        fail("merge_manifests: cannot express " + (part.root / e.path).string() +
             " relative to " + out_root.string());
      }
      merged.entries.push_back(ManifestEntry{rel.generic_string(), e.arch, e.label});
    }
  }
  return merged;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& e : m.entries) {
    out << e.path << '\t' << arch_name(e.arch) << '\t';
    if (e.label) {
      out << *e.label;
    } else {
      out << '-';
    }
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace caufc
