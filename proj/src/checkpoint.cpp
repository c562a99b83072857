#include "sdnrd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace sdnrd {

namespace {

constexpr char kNetMagic[8] = {'S', 'D', 'N', 'R', 'D', 'M', 'L', 'P'};
constexpr char kPolicyMagic[8] = {'S', 'D', 'N', 'R', 'D', 'P', 'O', 'L'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

void put_block(std::ostream& out, const Gradient& g) {
  const VectorXd flat = g.flatten();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

void get_block(std::istream& in, Gradient& g) {
  VectorXd flat(g.size());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
  g.unflatten(flat);
}

void expect_magic(std::istream& in, const char (&magic)[8]) {
  char buf[8];
  in.read(buf, 8);
  if (!in || std::memcmp(buf, magic, 8) != 0) throw std::runtime_error("not a checkpoint of the expected kind");
}

}  // namespace

void save_network(std::ostream& out, const Network& net) {
  out.write(kNetMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(double));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(net.layer(l).weight.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(net.layer(l).weight.cols()));
  }
  put<std::uint64_t>(out, net.adam_step());
  put_block(out, net.params());
  put_block(out, net.first_moment());
  put_block(out, net.second_moment());
}

Network load_network(std::istream& in) {
  expect_magic(in, kNetMagic);
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  if (get<std::uint32_t>(in) != sizeof(double)) throw std::runtime_error("checkpoint scalar size mismatch");
  const auto layers = get<std::uint32_t>(in);
  if (layers == 0) throw std::runtime_error("checkpoint has no layers");
  std::vector<Index> sizes;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<Index>(get<std::uint64_t>(in));
    const auto cols = static_cast<Index>(get<std::uint64_t>(in));
    if (l == 0) sizes.push_back(cols);
    else if (sizes.back() != cols) throw std::runtime_error("checkpoint layer shapes do not chain");
    sizes.push_back(rows);
  }
  Network net(sizes);
  net.set_adam_step(get<std::uint64_t>(in));
  get_block(in, net.params());
  get_block(in, net.first_moment());
  get_block(in, net.second_moment());
  return net;
}

void save_policy(std::ostream& out, const PolicyCheckpoint& policy) {
  out.write(kPolicyMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<double>(out, policy.config.exploration_std);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(policy.config.history_length));
  save_network(out, policy.network);
}

PolicyCheckpoint load_policy(std::istream& in) {
  expect_magic(in, kPolicyMagic);
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  PolicyCheckpoint p;
  p.config.exploration_std = get<double>(in);
  p.config.history_length = static_cast<Index>(get<std::uint32_t>(in));
  p.config.explore = false;
  p.network = load_network(in);
  if (p.network.input_size() != observation_size(p.config.history_length)) {
    throw std::runtime_error("policy network input does not match its history length");
  }
  return p;
}

void save_network_file(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_network(out, net);
}

Network load_network_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_network(in);
}

void save_policy_file(const std::filesystem::path& path, const PolicyCheckpoint& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_policy(out, policy);
}

PolicyCheckpoint load_policy_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_policy(in);
}

}  // namespace sdnrd
