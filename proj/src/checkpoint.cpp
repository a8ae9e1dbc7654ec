#include "lvst/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "lvst/config.hpp"

namespace lvst {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'V', 'S', 'T'};
constexpr std::uint64_t kMaxName = 1 << 12;
constexpr std::uint64_t kMaxRank = 8;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw InputError(std::string("checkpoint truncated reading ") + what);
  return v;
}

std::string get_string(std::istream& in, std::uint64_t len, const char* what) {
  std::string s(len, '\0');
  if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw InputError(std::string("checkpoint truncated reading ") + what);
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::json header = {{"model", to_json(ckpt.config)},
                           {"normalizer", {{"mean", ckpt.normalizer.mean}, {"std", ckpt.normalizer.std}}},
                           {"extra", ckpt.extra}};
  const std::string text = header.dump();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const std::string& name = ckpt.params.name(i);
    const Tensor& t = ckpt.params.tensor(i);
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, t.rank());
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw InputError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw InputError("not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, "config length");
  if (len > (1u << 24)) throw InputError("checkpoint config block too large");
  const std::string text = get_string(in, len, "config");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = model_config_from_json(header.at("model"));
    ckpt.normalizer.mean = header.at("normalizer").at("mean").get<double>();
    ckpt.normalizer.std = header.at("normalizer").at("std").get<double>();
    ckpt.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint config: ") + e.what());
  }

  const auto count = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint64_t>(in, "name length");
    if (name_len == 0 || name_len > kMaxName) throw InputError("checkpoint tensor name length out of range");
    std::string name = get_string(in, name_len, "tensor name");
    const auto rank = get<std::uint64_t>(in, "rank");
    if (rank == 0 || rank > kMaxRank) throw InputError("checkpoint tensor " + name + " has invalid rank");
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in, "extent"));
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw InputError("checkpoint truncated in tensor " + name);
    ckpt.params.add(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace lvst
