#include "tsgcn/archive.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace tsgcn {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

constexpr char kMagic[8] = {'T', 'S', 'G', 'C', 'C', 'L', 'I', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  std::string get_string() {
    std::string s(get<std::uint32_t>(), '\0');
    read(s.data(), s.size());
    return s;
  }

  void read(char* dst, std::size_t n) {
    if (!is_.read(dst, static_cast<std::streamsize>(n))) {
      throw IngestError(source_ + ": truncated clip archive");
    }
  }

 private:
  std::istream& is_;
  std::string source_;
};

}  // namespace

void save_archive(const std::filesystem::path& path, const ClipArchive& archive) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, 1);
  std::ostringstream layout;
  write_layout(layout, archive.layout);
  put_string(os, layout.str());
  put<std::uint64_t>(os, archive.dims);
  put<std::uint64_t>(os, archive.clip_len);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(archive.class_names.size()));
  for (const auto& c : archive.class_names) put_string(os, c);
  put<std::uint64_t>(os, archive.train.size());
  put<std::uint64_t>(os, archive.test.size());
  const Shape expected{archive.dims, archive.clip_len, archive.layout.joint_count};
  for (const auto* part : {&archive.train, &archive.test}) {
    for (const auto& clip : *part) {
      if (clip.data.shape() != expected) {
        throw ShapeError("save_archive: clip shape " + to_string(clip.data.shape()) +
                         " does not match " + to_string(expected));
      }
      put<std::uint32_t>(os, static_cast<std::uint32_t>(clip.label));
      put<std::uint64_t>(os, clip.start_frame);
      put_string(os, clip.sequence_id);
      os.write(reinterpret_cast<const char*>(clip.data.data()),
               static_cast<std::streamsize>(clip.data.size() * sizeof(double)));
    }
  }
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

ClipArchive load_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError(path.string() + ": cannot open clip archive");
  Reader r(is, path.string());
  char magic[8];
  r.read(magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kMagic)) throw IngestError(path.string() + ": not a clip archive");
  if (auto v = r.get<std::uint32_t>(); v != 1) {
    throw IngestError(path.string() + ": unsupported archive version " + std::to_string(v));
  }
  ClipArchive a;
  std::istringstream layout(r.get_string());
  a.layout = parse_layout(layout, path.string() + "#layout");
  a.dims = r.get<std::uint64_t>();
  a.clip_len = r.get<std::uint64_t>();
  a.class_names.resize(r.get<std::uint32_t>());
  for (auto& c : a.class_names) c = r.get_string();
  const auto n_train = r.get<std::uint64_t>();
  const auto n_test = r.get<std::uint64_t>();
  const Shape shape{a.dims, a.clip_len, a.layout.joint_count};
  for (auto [part, n] : {std::pair{&a.train, n_train}, std::pair{&a.test, n_test}}) {
    for (std::uint64_t i = 0; i < n; ++i) {
      SkeletonClip clip;
      clip.label = r.get<std::uint32_t>();
      if (clip.label >= a.class_names.size()) {
        throw IngestError(path.string() + ": clip label " + std::to_string(clip.label) + " out of range");
      }
      clip.start_frame = r.get<std::uint64_t>();
      clip.sequence_id = r.get_string();
      clip.data = Tensor(shape);
      r.read(reinterpret_cast<char*>(clip.data.data()), clip.data.size() * sizeof(double));
      part->push_back(std::move(clip));
    }
  }
  return a;
}

}  // namespace tsgcn
