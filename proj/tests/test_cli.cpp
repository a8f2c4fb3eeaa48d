#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

std::string binary() {
  const char* env = std::getenv("EVCAR_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "evcar_cli_test";
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  nlohmann::json j;
  f >> j;
  return j;
}

}  // namespace

TEST_CASE("solve produces a converged report and trajectory") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  const std::string traj = tmp.file("s1.csv");
  const int rc = run("solve --structure s1 --imax 1100 --vmax 110 --out " + report +
                     " --traj " + traj);
  CHECK(rc == 0);

  const nlohmann::json j = read_json(report);
  CHECK(j.at("converged").get<bool>());
  CHECK(j.at("slices").at("tf").get<double>() == doctest::Approx(5.6156).epsilon(1e-4));
  CHECK(j.at("admissible").get<bool>());

  std::ifstream f(traj);
  std::string header;
  std::getline(f, header);
  CHECK(header == "t,x1,x2,x3,p1,p2,p3,u,eta,arc");
}

TEST_CASE("solve round-trips through its own report") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  REQUIRE(run("solve --structure s1 --imax 1100 --vmax 110 --out " + report) == 0);
  const double tf_first = read_json(report).at("slices").at("tf").get<double>();

  const std::string second = tmp.file("s1_again.json");
  REQUIRE(run("solve --structure s1 --init " + report + " --out " + second) == 0);
  const nlohmann::json j = read_json(second);
  CHECK(j.at("slices").at("tf").get<double>() == doctest::Approx(tf_first).epsilon(1e-10));
  CHECK(j.at("residual_norm").get<double>() <= 1e-8);
}

TEST_CASE("malformed config exits with the usage code naming the key") {
  TempDir tmp;
  const std::string cfg = tmp.file("bad.json");
  {
    std::ofstream f(cfg);
    f << R"({"Lm": 0.05, "Rm": 0.03})";
  }
  const std::string cmd = binary() + " solve --structure s1 --config " + cfg +
                          " --out " + tmp.file("r.json") + " 2> " + tmp.file("err.txt");
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  std::ifstream f(tmp.file("err.txt"));
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("Km") != std::string::npos);
}

TEST_CASE("continue follows the first leg to its structure-change event") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  REQUIRE(run("solve --structure s1 --imax 1100 --vmax 110 --out " + report) == 0);

  const std::string path_csv = tmp.file("path.csv");
  const std::string events = tmp.file("events.json");
  const int rc = run("continue --homotopy h1 --from " + report + " --auto --out " +
                     path_csv + " --events " + events);
  CHECK(rc == 0);

  const nlohmann::json ev = read_json(events);
  REQUIRE(ev.is_array());
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].at("lambda").get<double>() == doctest::Approx(1081.94).epsilon(5e-4));

  std::ifstream f(path_csv);
  std::string header;
  std::getline(f, header);
  CHECK(header.rfind("s,lambda,p0_1", 0) == 0);
}

TEST_CASE("solve, continue and solve again preserve the zero") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  REQUIRE(run("solve --structure s1 --imax 1100 --vmax 110 --out " + report) == 0);
  const std::string end_report = tmp.file("s1_end.json");
  REQUIRE(run("continue --homotopy h1 --from " + report +
              " --target-imax 1090 --end-report " + end_report) == 0);
  const std::string final_report = tmp.file("s1_final.json");
  REQUIRE(run("solve --structure s1 --init " + end_report + " --out " +
              final_report) == 0);
  const nlohmann::json j = read_json(final_report);
  CHECK(j.at("imax").get<double>() == doctest::Approx(1090.0));
  CHECK(j.at("residual_norm").get<double>() <= 1e-8);
  CHECK(j.at("converged").get<bool>());
}

TEST_CASE("continue rejects a mismatched structure and report") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  REQUIRE(run("solve --structure s1 --imax 1100 --vmax 110 --out " + report) == 0);
  CHECK(run("continue --homotopy h4 --from " + report + " --auto") == 2);
}

TEST_CASE("continue reaches an explicit current target") {
  TempDir tmp;
  const std::string report = tmp.file("s1.json");
  REQUIRE(run("solve --structure s1 --imax 1100 --vmax 110 --out " + report) == 0);
  const std::string path_csv = tmp.file("path.csv");
  const int rc = run("continue --homotopy h1 --from " + report +
                     " --target-imax 1090 --out " + path_csv);
  CHECK(rc == 0);
  std::ifstream f(path_csv);
  std::string line, last;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (!line.empty()) last = line;
  }
  CHECK(!last.empty());
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("continue --homotopy h1") == 2);        // missing --from
  CHECK(run("solve --structure s9") == 2);          // unknown structure
  CHECK(run("scenario nosuch --out /tmp/x") == 2);  // unknown scenario kind
}

TEST_CASE("help lists the legs") {
  TempDir tmp;
  const std::string out = tmp.file("help.txt");
  const std::string cmd = binary() + " scenario --help > " + out + " 2>&1";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  std::ifstream f(out);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("h2b") != std::string::npos);
  CHECK(text.find("h5") != std::string::npos);
}

TEST_CASE("verify runs a small bang-optimality grid") {
  TempDir tmp;
  const std::string out = tmp.file("verify.json");
  const int rc = run("verify bang-optimality --grid 3 --out " + out);
  CHECK(rc == 0);
  const nlohmann::json j = read_json(out);
  CHECK(j.at("zero_crossings").get<int>() == 0);
  CHECK(j.at("tbar_f").get<double>() == doctest::Approx(5.6156).epsilon(1e-4));
}
