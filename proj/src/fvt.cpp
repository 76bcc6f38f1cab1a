#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>

#include "cellvis/cellgrid.hpp"
#include "cellvis/errors.hpp"

namespace cellvis {
namespace {

static_assert(std::endian::native == std::endian::little,
              "FVT1 encoding assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'V', 'T', '1'};

void putU32(std::vector<char>& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t getU32(std::span<const char> bytes, std::size_t& pos) {
  if (bytes.size() - pos < 4) throw LengthMismatchError("fvt: truncated header");
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + pos, 4);
  pos += 4;
  return v;
}

}  // namespace

std::vector<char> encodeFvt(const FeatureTensor& t) {
  if (t.data.size() != t.frames * t.cells * t.channels.size())
    throw ShapeError("fvt: payload size does not match dims");
  std::vector<char> out(kMagic, kMagic + 4);
  putU32(out, static_cast<std::uint32_t>(t.frames));
  putU32(out, static_cast<std::uint32_t>(t.cells));
  putU32(out, static_cast<std::uint32_t>(t.channels.size()));
  for (const auto& name : t.channels) {
    putU32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  const auto* raw = reinterpret_cast<const char*>(t.data.data());
  out.insert(out.end(), raw, raw + t.data.size() * sizeof(float));
  return out;
}

FeatureTensor decodeFvt(std::span<const char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("fvt: bad magic, expected FVT1");
  std::size_t pos = 4;
  FeatureTensor t;
  t.frames = getU32(bytes, pos);
  t.cells = getU32(bytes, pos);
  const std::uint32_t nch = getU32(bytes, pos);
  for (std::uint32_t c = 0; c < nch; ++c) {
    const std::uint32_t len = getU32(bytes, pos);
    if (bytes.size() - pos < len) throw LengthMismatchError("fvt: truncated channel manifest");
    t.channels.emplace_back(bytes.data() + pos, len);
    pos += len;
  }
  const std::size_t count = t.frames * t.cells * t.channels.size();
  if (bytes.size() - pos != count * sizeof(float))
    throw LengthMismatchError("fvt: payload is " + std::to_string(bytes.size() - pos) +
                              " bytes, header implies " + std::to_string(count * sizeof(float)));
  t.data.resize(count);
  std::memcpy(t.data.data(), bytes.data() + pos, count * sizeof(float));
  return t;
}

void writeFvt(const std::filesystem::path& path, const FeatureTensor& tensor) {
  const auto bytes = encodeFvt(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fvt file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing fvt file: " + path.string());
}

FeatureTensor readFvt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open fvt file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decodeFvt(bytes);
}

void writeChannelCsv(const std::filesystem::path& path, const FeatureTensor& t,
                     std::size_t channel) {
  if (channel >= t.channels.size()) throw ArgumentError("csv export: channel out of range");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv: " + path.string());
  out << "frame";
  for (std::size_t c = 0; c < t.cells; ++c) out << ",cell_" << c;
  out << '\n' << std::setprecision(9);
  for (std::size_t f = 0; f < t.frames; ++f) {
    out << f;
    for (std::size_t c = 0; c < t.cells; ++c) out << ',' << t.at(f, c, channel);
    out << '\n';
  }
}

double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  if (a.size() != b.size())
    throw ArgumentError("correlation: series lengths differ (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 2) throw ArgumentError("correlation: need at least 2 samples");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const bool flat = saa == 0.0 || sbb == 0.0;
  if (degenerate) *degenerate = flat;
  if (flat) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

CorrelationResult correlationAnalysis(const FeatureTensor& t, std::size_t channel,
                                      std::span<const std::uint32_t> cells) {
  if (channel >= t.channels.size()) throw ArgumentError("correlation: channel out of range");
  if (t.frames < 2) throw ArgumentError("correlation: need at least 2 time samples");
  CorrelationResult res;
  res.cells.assign(cells.begin(), cells.end());
  std::vector<std::vector<double>> series(cells.size(), std::vector<double>(t.frames));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (cells[k] >= t.cells) throw ArgumentError("correlation: cell id out of range");
    for (std::size_t f = 0; f < t.frames; ++f) series[k][f] = t.at(f, cells[k], channel);
  }
  const std::size_t m = cells.size();
  res.r.assign(m * m, 0.0);
  res.degenerate.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    bool flat = false;
    pearson(series[i], series[i], &flat);
    res.degenerate[i] = flat;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const double r = pearson(series[i], series[j]);
      res.r[i * m + j] = r;
      res.r[j * m + i] = r;
    }
  return res;
}

std::vector<DecayPoint> correlationDecay(const FeatureTensor& t, std::size_t channel,
                                         const GridDims& dims, int axis, int maxDistance) {
  if (axis < 0 || axis > 2) throw ArgumentError("correlation: axis must be 0, 1 or 2");
  const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (cells != t.cells) throw ArgumentError("correlation: grid dims do not match the tensor");
  std::vector<std::uint32_t> all(cells);
  std::iota(all.begin(), all.end(), 0u);
  const auto corr = correlationAnalysis(t, channel, all);
  CellGrid shape;
  shape.dims = dims;

  std::vector<DecayPoint> out;
  for (int d = 1; d <= maxDistance; ++d) {
    DecayPoint p{d, 0.0, 0};
    for (std::size_t i = 0; i < cells; ++i) {
      auto c = shape.coords(i);
      c[axis] += d;
      if (c[axis] >= dims[axis]) continue;
      const std::size_t j = shape.cellId(c[0], c[1], c[2]);
      if (corr.degenerate[i] || corr.degenerate[j]) continue;
      p.meanCorrelation += corr.at(i, j);
      ++p.pairs;
    }
    if (p.pairs) p.meanCorrelation /= static_cast<double>(p.pairs);
    out.push_back(p);
  }
  return out;
}

}  // namespace cellvis
