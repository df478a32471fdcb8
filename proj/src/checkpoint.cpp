#include "adnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "adnet/error.hpp"

namespace adnet {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'N', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.all().size()));
  std::uint64_t offset = 0;
  for (const Param& p : store.all()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint8_t>(os, 0);  // dtype 0 = float64
    put<std::uint8_t>(os, p.learnable ? 1 : 0);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.shape.size()));
    for (int d : p.value.shape) put<std::int64_t>(os, d);
    put<std::uint64_t>(os, offset);
    offset += p.value.size() * sizeof(double);
  }
  for (const Param& p : store.all())
    os.write(reinterpret_cast<const char*>(p.value.data.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const std::uint32_t count = get<std::uint32_t>(is);
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries(count);
  for (Entry& e : entries) {
    const std::uint32_t len = get<std::uint32_t>(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    const std::uint8_t dtype = get<std::uint8_t>(is);
    if (dtype != 0) throw DataError("checkpoint: unsupported dtype in " + path);
    get<std::uint8_t>(is);  // learnable flag, informational
    const std::uint32_t ndim = get<std::uint32_t>(is);
    e.shape.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) e.shape[i] = static_cast<int>(get<std::int64_t>(is));
    e.offset = get<std::uint64_t>(is);
  }
  const std::streampos data_start = is.tellg();
  for (const Entry& e : entries) {
    Param* p = store.find(e.name);
    if (!p) throw DataError("checkpoint: unknown parameter '" + e.name + "' in " + path);
    if (p->value.shape != e.shape)
      throw DataError("checkpoint: shape mismatch for '" + e.name + "' in " + path);
    is.seekg(data_start + static_cast<std::streamoff>(e.offset));
    is.read(reinterpret_cast<char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!is) throw DataError("checkpoint: truncated file: " + path);
}

}  // namespace adnet
