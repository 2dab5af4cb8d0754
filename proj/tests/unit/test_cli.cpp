#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string fixtures = FBSDE_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fbsde_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(FBSDE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST(Cli, VersionAndFixtureList) {
    const fs::path dir = scratch("info");
    fs::create_directories(dir);
    EXPECT_EQ(run("--version", dir / "v.txt"), 0);
    EXPECT_EQ(slurp(dir / "v.txt"), "fbsde 0.1.0\n");
    EXPECT_EQ(run("--list-fixtures", dir / "l.txt"), 0);
    EXPECT_NE(slurp(dir / "l.txt").find("anticipative_oracle.cfg"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
    const fs::path dir = scratch("usage");
    fs::create_directories(dir);
    EXPECT_EQ(run("", dir / "a.txt"), 2);
    EXPECT_EQ(run("solve", dir / "b.txt"), 2);
    EXPECT_EQ(run("solve --config /nonexistent.cfg", dir / "c.txt"), 2);
    EXPECT_EQ(run("frobnicate --config x", dir / "d.txt"), 2);
}

TEST(Cli, LinearTerminalSolve) {
    const fs::path dir = scratch("linear");
    ASSERT_EQ(run("solve --config " + fixtures + "/linear_terminal.cfg --out " + dir.string() + " --steps 40",
                  fs::temp_directory_path() / "fbsde_cli_linear.log"),
              0);
    for (const char* f : {"solution.csv", "trace.csv", "apriori.csv", "verdict.csv", "config.ini"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    std::ifstream in(dir / "solution.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,x,u,z");
    double worst = 0.0;
    while (std::getline(in, line)) {
        double t, x, u, z;
        char c;
        std::istringstream row(line);
        row >> t >> c >> x >> c >> u >> c >> z;
        if (t == 0.0) worst = std::max(worst, std::abs(u - x));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Cli, ConfigOverridesAreRecorded) {
    const fs::path dir = scratch("override");
    ASSERT_EQ(run("simulate --config " + fixtures + "/linear_terminal.cfg --out " + dir.string() +
                      " --steps 16 --paths 3000 --seed 77",
                  fs::temp_directory_path() / "fbsde_cli_override.log"),
              0);
    const std::string cfg = slurp(dir / "config.ini");
    EXPECT_NE(cfg.find("n_steps = 16"), std::string::npos);
    EXPECT_NE(cfg.find("n_paths = 3000"), std::string::npos);
    EXPECT_NE(cfg.find("seed = 77"), std::string::npos);
    EXPECT_EQ(slurp(dir / "paths.csv").substr(0, 27), "# hurst=0.75 seed=77 dt=0.0");
}

TEST(Cli, InvalidDelayExitsTwoNamingCondition) {
    const fs::path dir = scratch("invalid");
    fs::create_directories(dir);
    EXPECT_EQ(run("validate --config " + fixtures + "/invalid_delay.cfg --out " + dir.string(), dir / "log.txt"), 2);
    EXPECT_NE(slurp(dir / "log.txt").find("condition_i_delta"), std::string::npos);
    EXPECT_EQ(run("solve --config " + fixtures + "/invalid_delay.cfg --out " + dir.string(), dir / "log2.txt"), 2);
    EXPECT_NE(slurp(dir / "log2.txt").find("condition_i_delta"), std::string::npos);
}

TEST(Cli, CompareWithoutSectionExitsTwo) {
    const fs::path dir = scratch("nocompare");
    fs::create_directories(dir);
    EXPECT_EQ(run("compare --config " + fixtures + "/linear_terminal.cfg --out " + dir.string(), dir / "log.txt"), 2);
}

TEST(Cli, VerifyNeedsStepsDivisibleByFour) {
    const fs::path dir = scratch("verify_steps");
    fs::create_directories(dir);
    EXPECT_EQ(run("verify --config " + fixtures + "/linear_terminal.cfg --steps 42 --out " + dir.string(),
                  dir / "log.txt"),
              2);
}

TEST(Cli, ConvergeOnQuadraticFixture) {
    const fs::path dir = scratch("converge");
    ASSERT_EQ(run("converge --config " + fixtures + "/quadratic_terminal.cfg --steps 50 --out " + dir.string(),
                  fs::temp_directory_path() / "fbsde_cli_converge.log"),
              0);
    const std::string table = slurp(dir / "convergence.csv");
    EXPECT_EQ(table.substr(0, table.find('\n')), "n_space,dx,difference_to_next,order");
}
