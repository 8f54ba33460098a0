#include "claimrl/neural/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace claimrl::nn {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'M', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename Scalar>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Scalar, float>) {
    return "f32";
  } else {
    return "f64";
  }
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

}  // namespace

template <typename Scalar>
void save_archive(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
                  const std::vector<NamedParameter<Scalar>>& params) {
  nlohmann::ordered_json header;
  header["format"] = "claimrl-checkpoint";
  header["version"] = 1;
  header["kind"] = kind;
  header["dtype"] = dtype_name<Scalar>();
  header["config"] = config;
  auto entries = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = {p.tensor.rows(), p.tensor.cols()};
    e["offset"] = offset;
    const std::uint64_t nbytes = static_cast<std::uint64_t>(p.tensor.size()) * sizeof(Scalar);
    e["nbytes"] = nbytes;
    offset += nbytes;
    entries.push_back(std::move(e));
  }
  header["tensors"] = std::move(entries);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    // Row-major storage matches the element order of the shape.
    out.write(reinterpret_cast<const char*>(p.tensor.value().data()),
              static_cast<std::streamsize>(p.tensor.size() * static_cast<Eigen::Index>(sizeof(Scalar))));
  }
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error(path.string() + ": not a checkpoint");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (!in || header_len > (1u << 30)) throw std::runtime_error(path.string() + ": corrupt checkpoint header");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  auto header = nlohmann::json::parse(text);

  Archive a;
  a.kind = header.at("kind").get<std::string>();
  a.dtype = header.at("dtype").get<std::string>();
  a.config = header.at("config");
  const std::size_t width = a.dtype == "f32" ? 4 : a.dtype == "f64" ? 8 : 0;
  if (width == 0) throw std::runtime_error(path.string() + ": unknown dtype " + a.dtype);

  const std::streamoff data_start = static_cast<std::streamoff>(16 + header_len);
  for (const auto& e : header.at("tensors")) {
    ArchiveTensor t;
    t.shape = e.at("shape").get<std::vector<std::int64_t>>();
    std::int64_t count = 1;
    for (auto s : t.shape) count *= s;
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(count) * width)
      throw std::runtime_error(path.string() + ": size mismatch for " + e.at("name").get<std::string>());
    in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    t.values.resize(static_cast<std::size_t>(count));
    if (width == 4) {
      std::vector<float> buf(static_cast<std::size_t>(count));
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes));
      for (std::size_t i = 0; i < buf.size(); ++i) t.values[i] = buf[i];
    } else {
      in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(nbytes));
    }
    if (!in) throw std::runtime_error(path.string() + ": truncated tensor data");
    a.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

template <typename Scalar>
void restore_parameters(const Archive& archive, std::vector<NamedParameter<Scalar>>& params) {
  if (archive.tensors.size() != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(archive.tensors.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  for (auto& p : params) {
    auto it = archive.tensors.find(p.name);
    if (it == archive.tensors.end()) throw std::runtime_error("checkpoint lacks tensor " + p.name);
    const auto& t = it->second;
    if (t.shape.size() != 2 || t.shape[0] != p.tensor.rows() || t.shape[1] != p.tensor.cols())
      throw std::runtime_error("checkpoint tensor " + p.name + " has the wrong shape");
    auto& v = p.tensor.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>(t.values[static_cast<std::size_t>(i)]);
  }
}

template void save_archive<float>(const std::filesystem::path&, const std::string&, const nlohmann::json&,
                                  const std::vector<NamedParameter<float>>&);
template void save_archive<double>(const std::filesystem::path&, const std::string&, const nlohmann::json&,
                                   const std::vector<NamedParameter<double>>&);
template void restore_parameters<float>(const Archive&, std::vector<NamedParameter<float>>&);
template void restore_parameters<double>(const Archive&, std::vector<NamedParameter<double>>&);

}  // namespace claimrl::nn
