#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mlipgen/errors.hpp"
#include "mlipgen/setup.hpp"

using namespace mlipgen;

TEST_CASE("parser") {
  const Config c = Config::parse(R"(
# comment
top = 1
[a]
x = 2.5   # trailing
s = "hello # not a comment"
flag = true
list = [1, 2, 3]
names = ["p", "q"]
[a.b]
y = -3e-2
)");
  CHECK(c.get_double("top", 0) == 1.0);
  CHECK(c.get_double("a.x", 0) == 2.5);
  CHECK(c.get_string("a.s", "") == "hello # not a comment");
  CHECK(c.get_bool("a.flag", false));
  CHECK(c.get_ints("a.list", {}) == std::vector<int>{1, 2, 3});
  CHECK(c.get_strings("a.names", {}) == std::vector<std::string>{"p", "q"});
  CHECK(c.get_double("a.b.y", 0) == -0.03);
  CHECK(c.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(c.get_int("a.x", 0), Error);
  CHECK_THROWS_AS(c.get_string("a.x", ""), Error);
  CHECK(c.hash().size() == 16);
  CHECK(c.hash() == Config::parse(c.text()).hash());
  CHECK(c.hash() != Config::parse("top = 2").hash());
}

TEST_CASE("malformed input") {
  CHECK_THROWS_AS(Config::parse("[open"), Error);
  CHECK_THROWS_AS(Config::parse("x = "), Error);
  CHECK_THROWS_AS(Config::parse("x = [1, \"a\"]"), Error);
  CHECK_THROWS_AS(Config::parse("x = 1\nx = 2"), Error);
}

TEST_CASE("run config validation") {
  const RunConfig run = load_run_config(Config::parse(""));
  CHECK(run.r0_auto);
  CHECK(run.r0 > 0.9);
  CHECK(run.r0 < 1.0);
  CHECK(run.study.rmse_bases.size() == 4);

  try {
    load_run_config(Config::parse("[potential]\nstifness = 3"));
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigParse);
    CHECK(std::string(e.what()).find("potential.stifness") != std::string::npos);
  }
  CHECK_THROWS_AS(load_run_config(Config::parse("[training]\nL = 3")), Error);
  CHECK_THROWS_AS(load_run_config(Config::parse("[simulation]\narrangement = \"dimer\"")), Error);
  CHECK_THROWS_AS(load_run_config(Config::parse("[lattice]\ninteraction_radius = 2.0")), Error);

  const RunConfig fixed = load_run_config(Config::parse("[lattice]\nr0 = 0.95"));
  CHECK_FALSE(fixed.r0_auto);
  CHECK(fixed.r0 == 0.95);

  const RunConfig many = load_run_config(Config::parse("[study.rmse]\nmax_degree = [5, 7]\norder = [2, 3]"));
  REQUIRE(many.study.rmse_bases.size() == 2);
  CHECK(many.study.rmse_bases[1].order == 3);
  CHECK(many.study.rmse_bases[1].max_degree == 7);
}

TEST_CASE("arrangements") {
  const BravaisSpec b = BravaisSpec::triangular(1.0);
  const DefectSet two = arrangement_defects(b, "vacancy", 2, 8);
  REQUIRE(two.count() == 2);
  CHECK((two.defects[1].position - two.defects[0].position).norm() == doctest::Approx(8.0));
  const DefectSet four = arrangement_defects(b, "vacancy", 4, 8);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      CHECK((four.defects[i].position - four.defects[j].position).norm() >= 8.0 - 1e-12);
  const DefectSet mixed = arrangement_defects(b, "interstitial-vacancy", 2, 6);
  CHECK(mixed.defects[0].kind == DefectKind::Interstitial);
  CHECK(mixed.defects[1].kind == DefectKind::Vacancy);
}

#ifdef MLIPGEN_CLI_PATH
TEST_CASE("command line exit codes") {
  const auto dir = std::filesystem::temp_directory_path() / "mlipgen_cli_test";
  std::filesystem::create_directories(dir);
  const auto cfg = dir / "bad.toml";
  std::ofstream(cfg) << "[study]\nunknown_key = 1\n";
  const std::string cli = MLIPGEN_CLI_PATH;
  const std::string err = (dir / "err.json").string();
  int rc = std::system((cli + " study --config " + cfg.string() + " 2> " + err).c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  std::ifstream in(err);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("study.unknown_key") != std::string::npos);
  CHECK(text.find("\"error\":\"ConfigParse\"") != std::string::npos);

  rc = std::system((cli + " study --bogus-flag 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  rc = std::system((cli + " fit --config " + (dir / "missing.toml").string() + " 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  std::filesystem::remove_all(dir);
}
#endif
