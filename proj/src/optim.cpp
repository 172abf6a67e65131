#include "tsgcn/optim.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace tsgcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

SgdMomentum::SgdMomentum(std::span<Parameter* const> params, double learning_rate,
                         double momentum)
    : params_(params.begin(), params.end()), lr_(learning_rate), momentum_(momentum) {
  velocity_.reserve(params_.size());
  for (auto* p : params_) velocity_.emplace_back(p->value.shape());
}

void SgdMomentum::step(std::span<const Tensor> grads) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k]->value;
    auto& v = velocity_[k];
    const auto& g = grads[k];
    if (g.shape() != p.shape()) {
      throw ShapeError("sgd_step: gradient " + to_string(g.shape()) + " for parameter " +
                       params_[k]->name + " " + to_string(p.shape()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
  }
}

namespace {

constexpr char kMagic[8] = {'T', 'S', 'G', 'C', 'P', 'A', 'R', 'M'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("checkpoint: unexpected end of file");
  }
  return v;
}

}  // namespace

void write_parameters(std::ostream& os, std::span<const Parameter* const> params) {
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, 1);
  put<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

std::vector<NamedTensor> read_parameters(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("checkpoint: bad magic, not a parameter file");
  }
  if (auto version = get<std::uint32_t>(is); version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(is);
  std::vector<NamedTensor> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name.resize(get<std::uint32_t>(is));
    if (!is.read(nt.name.data(), static_cast<std::streamsize>(nt.name.size()))) {
      throw std::runtime_error("checkpoint: truncated name in record " + std::to_string(k));
    }
    Shape shape(get<std::uint32_t>(is));
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<double> values(shape_size(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint: truncated values for " + nt.name);
    }
    nt.value = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace tsgcn
