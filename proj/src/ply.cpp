#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include "cellvis/errors.hpp"
#include "cellvis/pointcloud.hpp"

namespace cellvis {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY reader assumes a little-endian host");

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<ScalarType> scalarTypeFromName(std::string_view name) {
  if (name == "char" || name == "int8") return ScalarType::I8;
  if (name == "uchar" || name == "uint8") return ScalarType::U8;
  if (name == "short" || name == "int16") return ScalarType::I16;
  if (name == "ushort" || name == "uint16") return ScalarType::U16;
  if (name == "int" || name == "int32") return ScalarType::I32;
  if (name == "uint" || name == "uint32") return ScalarType::U32;
  if (name == "float" || name == "float32") return ScalarType::F32;
  if (name == "double" || name == "float64") return ScalarType::F64;
  return std::nullopt;
}

std::size_t scalarSize(ScalarType t) {
  switch (t) {
    case ScalarType::I8:
    case ScalarType::U8: return 1;
    case ScalarType::I16:
    case ScalarType::U16: return 2;
    case ScalarType::I32:
    case ScalarType::U32:
    case ScalarType::F32: return 4;
    case ScalarType::F64: return 8;
  }
  return 0;
}

template <typename T>
T readAs(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double readScalar(ScalarType t, const char* p) {
  switch (t) {
    case ScalarType::I8: return readAs<std::int8_t>(p);
    case ScalarType::U8: return readAs<std::uint8_t>(p);
    case ScalarType::I16: return readAs<std::int16_t>(p);
    case ScalarType::U16: return readAs<std::uint16_t>(p);
    case ScalarType::I32: return readAs<std::int32_t>(p);
    case ScalarType::U32: return readAs<std::uint32_t>(p);
    case ScalarType::F32: return readAs<float>(p);
    case ScalarType::F64: return readAs<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::F32;
  bool isList = false;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;

  std::size_t stride() const {
    std::size_t s = 0;
    for (const auto& p : properties) s += scalarSize(p.type);
    return s;
  }
  bool hasList() const {
    return std::any_of(properties.begin(), properties.end(),
                       [](const Property& p) { return p.isList; });
  }
  int indexOf(std::string_view n) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == n) return static_cast<int>(i);
    return -1;
  }
};

struct Header {
  bool ascii = true;
  std::vector<Element> elements;
  std::size_t bodyOffset = 0;
};

std::vector<std::string_view> splitWords(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void headerError(std::size_t lineNo, std::string_view line, std::string_view why) {
  throw ParseError("ply header line " + std::to_string(lineNo) + ": " + std::string(why) +
                   " ('" + std::string(line) + "')");
}

Header parseHeader(std::string_view bytes) {
  Header h;
  std::size_t pos = 0;
  std::size_t lineNo = 0;
  bool sawFormat = false;
  while (true) {
    const std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string_view::npos)
      throw ParseError("ply header line " + std::to_string(lineNo + 1) +
                       ": missing end_header");
    std::string_view line = bytes.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    ++lineNo;

    const auto words = splitWords(line);
    if (lineNo == 1) {
      if (words.size() != 1 || words[0] != "ply") headerError(lineNo, line, "expected 'ply'");
      continue;
    }
    if (words.empty()) continue;
    const auto& kw = words[0];
    if (kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      if (words.size() != 3) headerError(lineNo, line, "malformed format line");
      if (words[1] == "ascii")
        h.ascii = true;
      else if (words[1] == "binary_little_endian")
        h.ascii = false;
      else
        headerError(lineNo, line, "unsupported encoding");
      sawFormat = true;
    } else if (kw == "element") {
      if (words.size() != 3) headerError(lineNo, line, "malformed element line");
      Element e;
      e.name = std::string(words[1]);
      auto [p, ec] = std::from_chars(words[2].data(), words[2].data() + words[2].size(), e.count);
      if (ec != std::errc{} || p != words[2].data() + words[2].size())
        headerError(lineNo, line, "bad element count");
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) headerError(lineNo, line, "property before any element");
      Property prop;
      if (words.size() == 5 && words[1] == "list") {
        prop.isList = true;
        auto t = scalarTypeFromName(words[3]);
        if (!t || !scalarTypeFromName(words[2])) headerError(lineNo, line, "unknown list type");
        prop.type = *t;
        prop.name = std::string(words[4]);
      } else if (words.size() == 3) {
        auto t = scalarTypeFromName(words[1]);
        if (!t) headerError(lineNo, line, "unknown property type");
        prop.type = *t;
        prop.name = std::string(words[2]);
      } else {
        headerError(lineNo, line, "malformed property line");
      }
      h.elements.back().properties.push_back(std::move(prop));
    } else if (kw == "end_header") {
      if (!sawFormat) headerError(lineNo, line, "end_header before format line");
      h.bodyOffset = pos;
      return h;
    } else {
      headerError(lineNo, line, "unknown keyword");
    }
  }
}

Color toColor(double r, double g, double b) {
  auto c = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  };
  return {c(r), c(g), c(b)};
}

}  // namespace

PointCloudFrame parsePly(std::string_view bytes) {
  const Header h = parseHeader(bytes);

  std::size_t vertexElem = h.elements.size();
  for (std::size_t i = 0; i < h.elements.size(); ++i)
    if (h.elements[i].name == "vertex") {
      vertexElem = i;
      break;
    }
  if (vertexElem == h.elements.size()) throw ParseError("ply header: no vertex element");
  const Element& vertex = h.elements[vertexElem];
  if (vertex.hasList()) throw ParseError("ply header: list properties on vertex unsupported");
  const int ix = vertex.indexOf("x"), iy = vertex.indexOf("y"), iz = vertex.indexOf("z");
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("ply header: vertex lacks x, y, z");
  const int ir = vertex.indexOf("red"), ig = vertex.indexOf("green"), ib = vertex.indexOf("blue");
  const bool hasColor = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloudFrame frame;
  frame.positions.resize(vertex.count);
  frame.colors.assign(vertex.count, Color{0, 0, 0});
  const std::size_t nProps = vertex.properties.size();
  std::vector<double> rec(nProps);

  auto store = [&](std::size_t i) {
    frame.positions[i] = {rec[ix], rec[iy], rec[iz]};
    if (!isFinite(frame.positions[i]))
      throw ParseError("ply body: non-finite position at vertex " + std::to_string(i));
    if (hasColor) frame.colors[i] = toColor(rec[ir], rec[ig], rec[ib]);
  };

  if (h.ascii) {
    std::string_view body = bytes.substr(h.bodyOffset);
    std::size_t pos = 0;
    auto nextToken = [&]() -> std::optional<std::string_view> {
      while (pos < body.size() && std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
      if (pos >= body.size()) return std::nullopt;
      std::size_t start = pos;
      while (pos < body.size() && !std::isspace(static_cast<unsigned char>(body[pos]))) ++pos;
      return body.substr(start, pos - start);
    };
    auto parseDouble = [](std::string_view tok, std::size_t lineHint) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || p != tok.data() + tok.size())
        throw ParseError("ply body: bad number '" + std::string(tok) + "' in record " +
                         std::to_string(lineHint));
      return v;
    };
    // Skip records of any elements that precede the vertex element.
    for (std::size_t e = 0; e < vertexElem; ++e) {
      const Element& el = h.elements[e];
      for (std::size_t r = 0; r < el.count; ++r) {
        for (const auto& prop : el.properties) {
          auto tok = nextToken();
          if (!tok)
            throw LengthMismatchError("ply body: element '" + el.name + "' truncated");
          if (prop.isList) {
            const auto n = static_cast<std::size_t>(parseDouble(*tok, r));
            for (std::size_t k = 0; k < n; ++k)
              if (!nextToken())
                throw LengthMismatchError("ply body: element '" + el.name + "' truncated");
          }
        }
      }
    }
    for (std::size_t i = 0; i < vertex.count; ++i) {
      for (std::size_t k = 0; k < nProps; ++k) {
        auto tok = nextToken();
        if (!tok)
          throw LengthMismatchError("ply body: header declares " + std::to_string(vertex.count) +
                                    " vertices but body ends inside vertex " + std::to_string(i));
        rec[k] = parseDouble(*tok, i);
      }
      store(i);
    }
  } else {
    std::size_t pos = h.bodyOffset;
    for (std::size_t e = 0; e < vertexElem; ++e) {
      const Element& el = h.elements[e];
      if (el.hasList())
        throw ParseError("ply body: cannot skip list element '" + el.name +
                         "' preceding vertex data");
      pos += el.count * el.stride();
    }
    const std::size_t stride = vertex.stride();
    const std::size_t need = vertex.count * stride;
    if (pos > bytes.size() || bytes.size() - pos < need)
      throw LengthMismatchError("ply body: header declares " + std::to_string(vertex.count) +
                                " vertices (" + std::to_string(need) + " bytes) but only " +
                                std::to_string(pos > bytes.size() ? 0 : bytes.size() - pos) +
                                " bytes remain");
    std::vector<std::size_t> offs(nProps);
    for (std::size_t k = 0, o = 0; k < nProps; ++k) {
      offs[k] = o;
      o += scalarSize(vertex.properties[k].type);
    }
    const char* base = bytes.data() + pos;
    for (std::size_t i = 0; i < vertex.count; ++i) {
      const char* recPtr = base + i * stride;
      for (std::size_t k = 0; k < nProps; ++k)
        rec[k] = readScalar(vertex.properties[k].type, recPtr + offs[k]);
      store(i);
    }
  }
  return frame;
}

PointCloudFrame loadPly(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ply file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parsePly(bytes);
}

void writePly(const std::filesystem::path& path, const PointCloudFrame& frame,
              PlyEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write ply file: " + path.string());
  const bool ascii = encoding == PlyEncoding::Ascii;
  out.precision(9);
  out << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << frame.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Vec3& p = frame.positions[i];
    const Color& c = frame.colors[i];
    const float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                          static_cast<float>(p.z)};
    if (ascii) {
      out << xyz[0] << ' ' << xyz[1] << ' ' << xyz[2] << ' ' << int(c[0]) << ' ' << int(c[1])
          << ' ' << int(c[2]) << '\n';
    } else {
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      out.write(reinterpret_cast<const char*>(c.data()), 3);
    }
  }
  if (!out) throw IoError("failed writing ply file: " + path.string());
}

}  // namespace cellvis
