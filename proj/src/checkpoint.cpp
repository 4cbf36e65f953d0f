#include "ravit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ravit/errors.hpp"

namespace ravit {

namespace {

static_assert(std::numeric_limits<double>::is_iec559, "checkpoint payloads assume IEEE-754 doubles");

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    unsigned char bytes[sizeof(T)];
    read_bytes(bytes, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  void read_bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte offset " +
                        std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    }
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const Entry& e : tensors)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(Checkpoint::kMagic.data(), Checkpoint::kMagic.size());
  put_le<std::uint32_t>(out, ckpt.version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.config.size()));
  for (std::uint32_t field : ckpt.config) put_le(out, field);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("checkpoint: name too long");
    if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("checkpoint: rank too high");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) put_le(out, v);
  }
  if (!out) throw FormatError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.read_bytes(magic.data(), magic.size(), "magic");
  if (magic != Checkpoint::kMagic) throw FormatError("checkpoint: bad magic at byte offset 0");
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>("version");
  if (ckpt.version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(ckpt.version) + " at byte offset 4");
  }
  const auto fields = r.get<std::uint32_t>("config field count");
  ckpt.config.reserve(fields);
  for (std::uint32_t i = 0; i < fields; ++i) ckpt.config.push_back(r.get<std::uint32_t>("config field"));
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    Checkpoint::Entry entry;
    entry.name.resize(r.get<std::uint16_t>("name length"));
    r.read_bytes(entry.name.data(), entry.name.size(), "tensor name");
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint32_t>("dimension"));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = r.get<double>("tensor payload");
    entry.tensor = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(entry));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint: trailing bytes at byte offset " + std::to_string(r.offset()));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace ravit
