#include "breedrl/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "breedrl/errors.hpp"

namespace breedrl {

namespace {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void put_array(std::ostream& out, const std::vector<T>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) fail("truncated archive");
    return value;
  }

  template <typename T>
  std::vector<T> get_array(std::uint64_t count) {
    if (count > (std::uint64_t{1} << 34)) fail("implausible tensor size");
    std::vector<T> values(count);
    in_.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(count * sizeof(T)));
    if (!in_) fail("truncated archive");
    return values;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, 0, what); }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

std::uint64_t ArchiveTensor::element_count() const {
  std::uint64_t count = 1;
  for (auto d : shape) count *= d;
  return count;
}

void write_archive(const std::filesystem::path& path, const ArchiveMagic& magic,
                   std::uint32_t version, const std::vector<ArchiveTensor>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(magic.data(), magic.size());
  put<std::uint32_t>(out, version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.data.index()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    std::visit(
        [&](const auto& values) {
          if (values.size() != t.element_count()) {
            throw std::logic_error("tensor '" + t.name + "' payload does not match its shape");
          }
          put_array(out, values);
        },
        t.data);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ArchiveTensor> read_archive(const std::filesystem::path& path,
                                        const ArchiveMagic& magic, std::uint32_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open archive");
  Reader r(in, path.string());
  ArchiveMagic found{};
  in.read(found.data(), found.size());
  if (!in || found != magic) r.fail("unexpected file magic");
  const auto found_version = r.get<std::uint32_t>();
  if (found_version != version) {
    r.fail("unsupported archive version " + std::to_string(found_version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<ArchiveTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveTensor t;
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > 4096) r.fail("implausible tensor name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) r.fail("implausible tensor rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.get<std::uint64_t>());
    const auto n = t.element_count();
    switch (dtype) {
      case 0: t.data = r.get_array<double>(n); break;
      case 1: t.data = r.get_array<std::uint64_t>(n); break;
      case 2: t.data = r.get_array<std::uint8_t>(n); break;
      default: r.fail("unknown dtype in tensor '" + t.name + "'");
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

const ArchiveTensor& find_tensor(const std::vector<ArchiveTensor>& tensors,
                                 const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ParseError("archive", 0, "missing tensor '" + name + "'");
}

namespace {

template <typename T>
const std::vector<T>& typed(const std::vector<ArchiveTensor>& tensors, const std::string& name) {
  const auto& t = find_tensor(tensors, name);
  const auto* values = std::get_if<std::vector<T>>(&t.data);
  if (values == nullptr) throw ParseError("archive", 0, "tensor '" + name + "' has wrong dtype");
  return *values;
}

}  // namespace

const std::vector<double>& tensor_f64(const std::vector<ArchiveTensor>& tensors,
                                      const std::string& name) {
  return typed<double>(tensors, name);
}

const std::vector<std::uint64_t>& tensor_u64(const std::vector<ArchiveTensor>& tensors,
                                             const std::string& name) {
  return typed<std::uint64_t>(tensors, name);
}

const std::vector<std::uint8_t>& tensor_u8(const std::vector<ArchiveTensor>& tensors,
                                           const std::string& name) {
  return typed<std::uint8_t>(tensors, name);
}

}  // namespace breedrl
