#include "gino/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gino::io {

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'I', 'N', 'O', 'C', 'K', 'P', 'T'};

std::size_t width(DType d) { return d == DType::f32 ? 4 : 8; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw IoError("container: unknown dtype '" + s + "'");
}

template <typename Scalar>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? DType::f32 : DType::f64;
}

}  // namespace

std::string dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

template <typename Scalar>
Tensor<Scalar> Record::as() const {
  Tensor<Scalar> t(shape);
  const Index n = t.size();
  if (dtype == dtype_of<Scalar>()) {
    std::memcpy(t.ptr(), bytes.data(), static_cast<std::size_t>(n) * sizeof(Scalar));
  } else if (dtype == DType::f32) {
    std::vector<float> tmp(static_cast<std::size_t>(n));
    std::memcpy(tmp.data(), bytes.data(), tmp.size() * 4);
    for (Index i = 0; i < n; ++i) t[i] = static_cast<Scalar>(tmp[static_cast<std::size_t>(i)]);
  } else {
    std::vector<double> tmp(static_cast<std::size_t>(n));
    std::memcpy(tmp.data(), bytes.data(), tmp.size() * 8);
    for (Index i = 0; i < n; ++i) t[i] = static_cast<Scalar>(tmp[static_cast<std::size_t>(i)]);
  }
  return t;
}

template Tensor<float> Record::as<float>() const;
template Tensor<double> Record::as<double>() const;

template <typename Scalar>
void Archive::put(const std::string& name, const Tensor<Scalar>& t) {
  Record r;
  r.dtype = dtype_of<Scalar>();
  r.shape = t.shape();
  r.bytes.resize(static_cast<std::size_t>(t.size()) * sizeof(Scalar));
  if (!r.bytes.empty()) std::memcpy(r.bytes.data(), t.ptr(), r.bytes.size());
  records_[name] = std::move(r);
}

template void Archive::put<float>(const std::string&, const Tensor<float>&);
template void Archive::put<double>(const std::string&, const Tensor<double>&);

void Archive::put_vector(const std::string& name, const Eigen::VectorXd& v) {
  put(name, Tensor<double>({v.size()}, v));
}

const Record& Archive::at(const std::string& name) const {
  auto it = records_.find(name);
  if (it == records_.end()) throw IoError("container: no tensor named '" + name + "'");
  return it->second;
}

Eigen::VectorXd Archive::get_vector(const std::string& name) const { return get<double>(name).data(); }

std::vector<std::string> Archive::names() const {
  std::vector<std::string> out;
  for (const auto& [name, r] : records_) out.push_back(name);
  return out;
}

std::vector<unsigned char> Archive::serialize() const {
  nlohmann::json header;
  header["version"] = kContainerVersion;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, r] : records_) {
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(r.dtype)},
                                 {"shape", r.shape},
                                 {"offset", offset},
                                 {"nbytes", r.bytes.size()}});
    offset += r.bytes.size();
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  std::vector<unsigned char> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + 8);
  const auto* lp = reinterpret_cast<const unsigned char*>(&len);
  out.insert(out.end(), lp, lp + 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, r] : records_) out.insert(out.end(), r.bytes.begin(), r.bytes.end());
  return out;
}

Archive Archive::deserialize(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError(origin + ": not a gino container");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) throw IoError(origin + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed header: " + e.what());
  }
  if (header.value("version", std::string()) != kContainerVersion)
    throw IoError(origin + ": unsupported container version '" + header.value("version", std::string()) + "'");
  Archive a;
  a.meta = header.value("meta", nlohmann::json::object());
  const std::size_t base = 16 + len;
  for (const auto& t : header.at("tensors")) {
    Record r;
    r.dtype = parse_dtype(t.at("dtype").get<std::string>());
    r.shape = t.at("shape").get<Shape>();
    const auto off = t.at("offset").get<std::uint64_t>();
    const auto nb = t.at("nbytes").get<std::uint64_t>();
    if (nb != static_cast<std::uint64_t>(shape_size(r.shape)) * width(r.dtype))
      throw IoError(origin + ": size of '" + t.at("name").get<std::string>() + "' disagrees with its shape");
    if (base + off + nb > bytes.size()) throw IoError(origin + ": truncated payload");
    r.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(base + off), bytes.begin() + static_cast<std::ptrdiff_t>(base + off + nb));
    a.records_[t.at("name").get<std::string>()] = std::move(r);
  }
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

}  // namespace gino::io
