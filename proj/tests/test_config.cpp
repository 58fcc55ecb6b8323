#include "idea/config.hpp"

#include <doctest.h>

using namespace idea;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.train.alpha == 100);
  CHECK(c.train.num_domains == 10);
  CHECK(c.train.epochs == 300);
  CHECK(c.train.hidden_dim == 64);
  CHECK(c.train.latent_dim == 32);
  CHECK(c.train.train_feature_eps == 0.01);
  CHECK(c.train.train_feature_steps == 3);
  CHECK(c.eval.eval_feature_steps == 20);
  CHECK(c.eval.target_fraction == 0.2);
  CHECK(c.train.variant == Variant::full);
}

TEST_CASE("parse_config reads typed values, comments and blank lines") {
  const RunConfig c = parse_config(
      "# comment\n"
      "alpha = 25   # trailing\n"
      "\n"
      "epochs=12\n"
      "variant = no_LE\n"
      "scenarios = clean, feature_pgd\n"
      "seeds = 3,4\n",
      "cfg");
  CHECK(c.train.alpha == 25);
  CHECK(c.train.epochs == 12);
  CHECK(c.train.variant == Variant::no_LE);
  CHECK(c.eval.scenarios == "clean, feature_pgd");
  CHECK(parse_seed_list(c.eval.seeds) == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("unknown keys are rejected by name with their line") {
  const std::string what = error_of([] { parse_config("alpha = 1\nalhpa = 2\n", "run.cfg"); });
  CHECK(what.find("alhpa") != std::string::npos);
  CHECK(what.find("run.cfg:2") != std::string::npos);
}

TEST_CASE("malformed values, duplicate keys and missing separators are rejected") {
  CHECK(error_of([] { parse_config("epochs = ten\n", "c"); }).find("epochs") != std::string::npos);
  CHECK(error_of([] { parse_config("epochs = 1\nepochs = 2\n", "c"); }).find("duplicate") != std::string::npos);
  CHECK_THROWS_AS(parse_config("epochs\n", "c"), Error);
  CHECK_THROWS_AS(parse_config("variant = everything\n", "c"), Error);
  CHECK_THROWS_AS(parse_config("alpha = 1.5x\n", "c"), Error);
}

TEST_CASE("to_text round-trips and the hash tracks every value") {
  RunConfig c;
  c.train.alpha = 0.5;
  c.train.seed = 9;
  c.eval.scenarios = "clean";
  const RunConfig back = parse_config(c.to_text(), "echo");
  CHECK(back.to_text() == c.to_text());
  CHECK(back.hash() == c.hash());
  RunConfig other = c;
  other.train.learning_rate = 0.02;
  CHECK(other.hash() != c.hash());
  CHECK(c.hash().size() == 16);
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("0") == std::vector<std::uint64_t>{0});
  CHECK(parse_seed_list("1, 2\n3\n") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(error_of([] { parse_seed_list("1\n2\n1\n"); }).find("duplicate") != std::string::npos);
  CHECK_THROWS_AS(parse_seed_list(""), Error);
  CHECK_THROWS_AS(parse_seed_list("1,x"), Error);
}

TEST_CASE("variant names round-trip") {
  for (Variant v : {Variant::full, Variant::no_LI, Variant::no_LE, Variant::no_LI_LE, Variant::no_LD}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
}
