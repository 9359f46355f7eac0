#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "npmle/harness.hpp"
#include "npmle/serialize.hpp"

using namespace npmle;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("npmle_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    put("k.json", R"({"v":1,"type":"kernel","d":1,"b":1,"theta_lo":[-1],"theta_hi":[1]})");
    put("kp.json", R"({"v":1,"type":"kernel","d":1,"b":0,"theta_lo":[0.5],"theta_hi":[4]})");
    put("g2.json", R"({"v":1,"type":"mixing","atoms":[[-0.5],[0.5]],"weights":[0.6,0.4]})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void put(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }
  std::string get(const std::string& name) const {
    std::ifstream in(dir_ / name);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "npmle");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::dispatch(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(Cli, FitSingleObservationClamps) {
  put("d.csv", "2.5\n");
  ASSERT_EQ(run({"fit", "--data", path("d.csv"), "--kernel", path("k.json"), "--out", path("g.json")}), 0) << err_.str();
  const DiscreteMixing g = load_mixing(path("g.json"));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(g.atom(0)[0], 1.0);
  EXPECT_TRUE(certificate_from_json(get("g.json")).certified);
  EXPECT_NE(out_.str().find("certified=true"), std::string::npos);
}

TEST_F(Cli, FitRoundTripThroughDivergence) {
  put("d.csv", "0.3\n-0.8\n1.7\n0.1\n-0.2\n0.9\n");
  ASSERT_EQ(run({"fit", "--data", path("d.csv"), "--kernel", path("k.json"), "--out", path("g.json"), "--tol", "1e-9"}), 0);
  ASSERT_EQ(run({"divergence", "--ghat", path("g.json"), "--g0", path("g.json"), "--kernel", path("k.json")}), 0);
  EXPECT_EQ(out_.str(), "chi2=0\n");
  ASSERT_EQ(run({"divergence", "--ghat", path("g.json"), "--g0", path("g2.json"), "--kernel", path("k.json"),
                 "--metric", "hellinger"}),
            0);
  EXPECT_EQ(out_.str().rfind("hellinger=", 0), 0u);
}

TEST_F(Cli, LrtOfIdenticalModelsIsZero) {
  put("d.csv", "0.3\n-0.8\n1.7\n");
  ASSERT_EQ(run({"lrt", "--ghat", path("g2.json"), "--g0", path("g2.json"), "--data", path("d.csv")}), 0) << err_.str();
  EXPECT_EQ(out_.str(), "0\n");
}

TEST_F(Cli, Demix) {
  put("a.json", R"({"v":1,"type":"mixing","atoms":[[0],[1]],"weights":[0.5,0.5]})");
  put("b.json", R"({"v":1,"type":"mixing","atoms":[[0.5]],"weights":[1]})");
  ASSERT_EQ(run({"demix", "--ghat", path("a.json"), "--g0", path("b.json")}), 0);
  EXPECT_EQ(out_.str(), "0.5\n");
}

TEST_F(Cli, SlopeOnExactPowerLaw) {
  {
    std::ofstream f(path("r.jsonl"));
    for (std::size_t n : {250, 500, 1000, 2000, 4000}) {
      for (int rep = 0; rep < 3; ++rep) {
        RateRecord r;
        r.study = "rates";
        r.n = n;
        r.rep = rep;
        r.metrics["nchisq"] = 7.0 / static_cast<double>(n);
        f << record_to_jsonl(r) << '\n';
      }
    }
  }
  ASSERT_EQ(run({"slope", "--records", path("r.jsonl"), "--metric", "nchisq"}), 0) << err_.str();
  EXPECT_EQ(out_.str().substr(0, 8), "-1.0000 ");
}

TEST_F(Cli, PosteriorWithEnvelope) {
  put("d.csv", "0.3\n-0.8\n");
  put("g.json", R"({"v":1,"type":"mixing","atoms":[[-0.4],[0.6]],"weights":[0.5,0.5]})");
  ASSERT_EQ(run({"posterior", "--ghat", path("g.json"), "--g0", path("g2.json"), "--data", path("d.csv"), "--kernel",
                 path("k.json"), "--out", path("pm.csv")}),
            0)
      << err_.str();
  std::istringstream csv(get("pm.csv"));
  std::string header, row;
  std::getline(csv, header);
  EXPECT_EQ(header, "x0,pm0,pm0_dist,envelope");
  int rows = 0;
  while (std::getline(csv, row)) {
    ++rows;
    double x, pm, dist, env;
    char c;
    std::istringstream(row) >> x >> c >> pm >> c >> dist >> c >> env;
    EXPECT_LE(dist, env);
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(Cli, StudiesAreSeededAndResumable) {
  put("c.toml", "fixture = \"G2\"\nn = [100, 200]\nreps = 2\n");
  ASSERT_EQ(run({"rates", "--config", path("c.toml"), "--records", path("a.jsonl"), "--seed", "5", "--out", path("s.csv")}), 0)
      << err_.str();
  EXPECT_NE(out_.str().find("records=4"), std::string::npos);
  ASSERT_EQ(run({"rates", "--config", path("c.toml"), "--records", path("b.jsonl"), "--seed", "5", "--threads", "2"}), 0);
  EXPECT_EQ(get("a.jsonl").size(), get("b.jsonl").size());
  const auto a = read_records(path("a.jsonl"));
  const auto b = read_records(path("b.jsonl"));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(record_to_jsonl(a[i]), record_to_jsonl(b[i]));
  ASSERT_EQ(run({"rates", "--config", path("c.toml"), "--records", path("a.jsonl"), "--seed", "5"}), 0);
  EXPECT_EQ(read_records(path("a.jsonl")).size(), 4u);
  EXPECT_EQ(get("s.csv").substr(0, 24), "n,metric,median,q25,q75\n");
}

TEST_F(Cli, QQFromSubmodelRecords) {
  put("c.toml", "fixture = \"GU\"\nn = [300]\nreps = 200\nK = [1]\n");
  ASSERT_EQ(run({"submodel-qq", "--config", path("c.toml"), "--records", path("q.jsonl"), "--threads", "2"}), 0)
      << err_.str();
  ASSERT_EQ(run({"qq", "--records", path("q.jsonl"), "--k", "1"}), 0) << err_.str();
  EXPECT_EQ(out_.str().rfind("ks=", 0), 0u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"nonsense"}), 1);
  EXPECT_EQ(run({"fit", "--data", path("none.csv"), "--kernel", path("k.json"), "--out", path("o.json")}), 1);
  EXPECT_EQ(run({"demix", "--ghat", path("g2.json"), "--g0", path("g2.json"), "--bogus", "3"}), 1);
  EXPECT_EQ(run({"--help"}), 0);
  put("neg.csv", "1\n-3\n");
  EXPECT_EQ(run({"fit", "--data", path("neg.csv"), "--kernel", path("kp.json"), "--out", path("o.json")}), 1);
  EXPECT_NE(err_.str().find("line 2"), std::string::npos) << err_.str();
  put("frac.csv", "1.5\n");
  EXPECT_EQ(run({"fit", "--data", path("frac.csv"), "--kernel", path("kp.json"), "--out", path("o.json")}), 1);
  put("v0.json", R"({"type":"mixing","atoms":[[0]],"weights":[1]})");
  EXPECT_EQ(run({"demix", "--ghat", path("v0.json"), "--g0", path("g2.json")}), 1);
  EXPECT_EQ(run({"divergence", "--ghat", path("g2.json"), "--g0", path("g2.json"), "--metric", "nope"}), 1);
}
