#include "sdnrd/checkpoint.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace sdnrd;

TEST_CASE("network round-trip is bit exact") {
  Rng rng(3);
  Network net = make_priority_network(3, rng, {16, 16});
  Gradient g = backward_params(net, VectorXd::Ones(8));
  adam_update(net, g, AdamConfig{});
  adam_update(net, g, AdamConfig{});

  std::stringstream buf;
  save_network(buf, net);
  const Network back = load_network(buf);
  CHECK(back.sizes() == net.sizes());
  CHECK(back.params().flatten() == net.params().flatten());
  CHECK(back.first_moment().flatten() == net.first_moment().flatten());
  CHECK(back.second_moment().flatten() == net.second_moment().flatten());
  CHECK(back.adam_step() == 2);
}

TEST_CASE("policy file round-trip") {
  Rng rng(4);
  PolicyCheckpoint p{PolicyConfig{0.03, true, 4}, make_priority_network(4, rng, {8})};
  const auto path = std::filesystem::temp_directory_path() / "sdnrd_policy_roundtrip.bin";
  save_policy_file(path, p);
  const PolicyCheckpoint q = load_policy_file(path);
  std::filesystem::remove(path);
  CHECK(q.config.exploration_std == 0.03);
  CHECK(q.config.history_length == 4);
  CHECK(q.network.params().flatten() == p.network.params().flatten());
}

TEST_CASE("corrupt input is rejected") {
  std::stringstream junk("NOTAMODELFILE");
  CHECK_THROWS(load_network(junk));

  Rng rng(5);
  std::stringstream buf;
  save_network(buf, make_priority_network(1, rng, {4}));
  const std::string full = buf.str();
  std::stringstream truncated(full.substr(0, full.size() / 2));
  CHECK_THROWS(load_network(truncated));
  CHECK_THROWS(load_network_file("/nonexistent/net.bin"));
}
