#include <gtest/gtest.h>

#include "qrflab/cli.hpp"

using namespace qrflab;

namespace {

const fs::path kScenarios = QRFLAB_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qrflab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_scenario(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "scenario.json";
  write_text(p, text);
  return p;
}

std::string scenario(const std::string& name) { return (kScenarios / (name + ".json")).string(); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

const char* kGeodesicText = R"({
  "name": "g",
  "spacetime": {
    "chart": {"lo": [0, -2], "hi": [4, 2], "shape": [5, 5]},
    "metric": {"kind": "minkowski"}
  },
  "geodesic": {"x0": [0.5, 0.0], "u0": [1.0, 0.1], "tau1": 1.0, "steps": 10}
})";

}  // namespace

TEST(Cli, BundledScenariosPass) {
  const std::vector<std::pair<std::string, std::string>> runs{
      {"verify-eep", "newton-2branch"},       {"verify-eep-geodesic", "newton-2branch"},
      {"newton-clock", "newton-2branch"},     {"newton-equivalence", "newton-2branch"},
      {"identify-points", "newton-2branch"},  {"geodesic", "minkowski-geodesic"},
      {"fermi", "minkowski-geodesic"},        {"fermi", "weak-field-fermi"},
      {"propagator", "flat-propagator"}};
  for (const auto& [cmd, name] : runs) {
    const auto res = run(cmd, scenario(name), scratch(cmd + "_" + name));
    EXPECT_EQ(res.status, 0) << cmd << " " << name << ": " << res.message;
    EXPECT_TRUE(res.report["pass"].get<bool>());
  }
}

TEST(Cli, MinkowskiGeodesicIsStraightLine) {
  const fs::path out = scratch("straight");
  ASSERT_EQ(run("geodesic", scenario("minkowski-geodesic"), out).status, 0);
  const Document doc = load_document(scenario("minkowski-geodesic"));
  const auto& g = doc.root["geodesic"];
  const auto x0 = g["x0"].get<std::vector<double>>(), u0 = g["u0"].get<std::vector<double>>();
  const auto rows = read_csv(out / "geodesic.csv");
  ASSERT_EQ(rows.size(), 41u);
  for (const auto& r : rows) {
    const double tau = r[0];
    for (int a = 0; a < 4; ++a) {
      EXPECT_NEAR(r[1 + a], x0[a] + u0[a] * tau, 1e-12);
      EXPECT_NEAR(r[5 + a], u0[a], 1e-12);
    }
  }
}

TEST(Cli, MalformedJsonExitsTwoWithLine) {
  const fs::path dir = scratch("malformed");
  const auto p = write_scenario(dir, "{\n  \"name\": \"x\",\n  \"seed\": ,\n}\n");
  const auto res = run("geodesic", p.string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find("malformed"), std::string::npos) << res.message;
  EXPECT_FALSE(fs::exists(dir / "out" / "report.json"));
}

TEST(Cli, UnknownKeyRejectedAtItsLine) {
  const fs::path dir = scratch("unknown");
  std::string text = kGeodesicText;
  text.replace(text.find("\"steps\": 10"), 11, "\"steps\": 10, \"stpes\": 3");
  const auto p = write_scenario(dir, text);
  const auto res = run("geodesic", p.string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find(":7: "), std::string::npos) << res.message;
  EXPECT_NE(res.message.find("stpes"), std::string::npos);
}

TEST(Cli, UnknownKeyInUnusedBlockRejected) {
  const fs::path dir = scratch("unused");
  std::string text = kGeodesicText;
  text.insert(text.rfind('}'), ",\n  \"tolerances\": {\"metrc\": 1}\n");
  const auto res = run("geodesic", write_scenario(dir, text).string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find("metrc"), std::string::npos) << res.message;
  EXPECT_NE(res.message.find(":9: "), std::string::npos) << res.message;
}

TEST(Cli, MissingKeyAndWrongTypeExitTwo) {
  const fs::path dir = scratch("missing");
  std::string text = kGeodesicText;
  text.replace(text.find("\"tau1\": 1.0, "), 13, "");
  auto res = run("geodesic", write_scenario(dir, text).string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find("tau1"), std::string::npos) << res.message;

  text = kGeodesicText;
  text.replace(text.find("\"steps\": 10"), 11, "\"steps\": \"ten\"");
  res = run("geodesic", write_scenario(dir, text).string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find("wrong type"), std::string::npos) << res.message;
}

TEST(Cli, MissingBlockAndUnknownCommandExitTwo) {
  const fs::path dir = scratch("block");
  EXPECT_EQ(run("propagator", write_scenario(dir, kGeodesicText).string(), dir / "out").status, 2);
  EXPECT_EQ(run("teleport", write_scenario(dir, kGeodesicText).string(), dir / "out").status, 2);
}

TEST(Cli, ToleranceFailureExitsOneWithReport) {
  const fs::path dir = scratch("tolfail");
  std::string text = slurp(scenario("newton-2branch"));
  text.replace(text.find("\"metric\": 1e-10, \"dmetric_C\": 1.0"), 32,
               "\"metric\": 1e-10, \"dmetric_C\": 1.0, \"equivalence_safety\": 1e-6");
  const auto res = run("newton-equivalence", write_scenario(dir, text).string(), dir / "out");
  EXPECT_EQ(res.status, 1) << res.message;
  const json rep = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_FALSE(rep["pass"].get<bool>());
}

TEST(Cli, StrictTurnsWarningsIntoFailures) {
  const auto loose = run("propagator", scenario("flat-propagator"), scratch("loose"));
  ASSERT_EQ(loose.status, 0);
  ASSERT_FALSE(loose.report["warnings"].empty());
  EXPECT_EQ(run("propagator", scenario("flat-propagator"), scratch("strict"), {0, true}).status, 1);
}

TEST(Cli, ReportsAreByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& cmd : {"verify-eep", "newton-equivalence"}) {
    ASSERT_EQ(run(cmd, scenario("newton-2branch"), a / cmd, {1, false}).status, 0);
    ASSERT_EQ(run(cmd, scenario("newton-2branch"), b / cmd, {2, false}).status, 0);
  }
  for (const auto& f : {"verify-eep/report.json", "verify-eep/eep.csv", "newton-equivalence/report.json",
                        "newton-equivalence/equivalence.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "verify-eep" / "metadata.json"));
  EXPECT_EQ(slurp(a / "verify-eep" / "report.json").find("utc"), std::string::npos);
}

TEST(Cli, SeedFixesJitteredSupports) {
  const fs::path dir = scratch("seed");
  std::string text = slurp(scenario("newton-2branch"));
  const auto base = parse_scenario(parse_document(text));
  const auto again = parse_scenario(parse_document(text));
  text.replace(text.find("\"seed\": 7"), 9, "\"seed\": 8");
  const auto other = parse_scenario(parse_document(text));
  const auto amps = [](const Scenario& s) { return s.state->branches()[0].psi_P->amps(); };
  EXPECT_EQ(amps(base), amps(again));
  EXPECT_NE(amps(base), amps(other));
}

TEST(Cli, StateBlobsRoundTrip) {
  const fs::path dir = scratch("blobs");
  const auto sc = parse_scenario(load_document(scenario("newton-2branch")));
  write_json(dir / "state.json", state_to_json(*sc.state, dir));
  const Document doc = load_document((dir / "state.json").string());
  const SuperposedState back = state_from(Reader(doc, doc.root, "state"), dir);
  ASSERT_EQ(back.size(), sc.state->size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& x = back.branches()[i];
    const auto& y = sc.state->branches()[i];
    EXPECT_EQ(x.label, y.label);
    EXPECT_EQ(x.c, y.c);
    EXPECT_EQ(x.psi_P->amps(), y.psi_P->amps());
    EXPECT_EQ(x.phi_M->amps(), y.phi_M->amps());
    EXPECT_EQ(x.g->value(Point::Zero(2)), y.g->value(Point::Zero(2)));
  }
  EXPECT_EQ(fs::file_size(dir / "state_0_P.bin"), 16u * 21 * 21);
}

TEST(Cli, KernelBlobMatchesTransfer) {
  const fs::path out = scratch("kernel");
  ASSERT_EQ(run("propagator", scenario("flat-propagator"), out).status, 0);
  const auto sc = parse_scenario(load_document(scenario("flat-propagator")));
  const Kernel k = kernel_transfer(sc.metric, sc.propagator->lattice, false);
  const CVector blob = read_blob(out / "kernel.bin", static_cast<std::size_t>(k.matrix.size()));
  for (Eigen::Index i = 0; i < k.matrix.rows(); ++i)
    for (Eigen::Index j = 0; j < k.matrix.cols(); ++j) EXPECT_EQ(blob[i * k.matrix.cols() + j], k.matrix(i, j));
  const json hdr = json::parse(slurp(out / "kernel.json"));
  EXPECT_EQ(hdr["rows"].get<int>(), 15);
}

TEST(Cli, WeakFieldViolationRejected) {
  const fs::path dir = scratch("weak");
  std::string text = slurp(scenario("newton-2branch"));
  text.replace(text.find("\"M_src\": 3000.0"), 15, "\"M_src\": 300000.0");
  const auto res = run("newton-equivalence", write_scenario(dir, text).string(), dir / "out");
  EXPECT_EQ(res.status, 2);
  EXPECT_NE(res.message.find("branch 0"), std::string::npos) << res.message;
}
