#include "gbsde/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using gbsde::read_text;

namespace {

const std::string kConfigs = GBSDE_SOURCE_DIR "/configs/";

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("gbsde_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Runs the CLI with stdout/stderr captured under dir, returning the exit status.
int run(const std::string& args, const fs::path& dir)
{
    const std::string cmd = std::string("\"") + GBSDE_CLI_PATH + "\" " + args + " >\"" + (dir / "stdout.txt").string()
                            + "\" 2>\"" + (dir / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmallGrid = " --nx 101 --j-max 6";

} // namespace

TEST(Cli, SolveWritesOutputs)
{
    const fs::path dir = scratch("solve");
    ASSERT_EQ(run("--out " + (dir / "out").string() + " solve --problem " + kConfigs + "american_put.toml" + kSmallGrid, dir),
              0)
        << read_text(dir / "stderr.txt");
    for (const char* name :
         {"field.csv", "residual.csv", "trace.csv", "diagnostics.json", "validation.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir / "out" / name)) << name;
    }
    const std::string manifest = read_text(dir / "out" / "manifest.json");
    EXPECT_NE(manifest.find("\"toml\""), std::string::npos);
    EXPECT_NE(manifest.find("\"grid\""), std::string::npos);
    EXPECT_EQ(read_text(dir / "out" / "trace.csv").substr(0, 7), "m,sup_d");
}

TEST(Cli, DeterministicAndReplayable)
{
    const fs::path dir = scratch("determinism");
    const std::string base = " solve --problem " + kConfigs + "american_put_rate.toml --nx 101 --j-max 8";
    ASSERT_EQ(run("--out " + (dir / "a").string() + base, dir), 0);
    ASSERT_EQ(run("--out " + (dir / "b").string() + base, dir), 0);
    ASSERT_EQ(run("--out " + (dir / "c").string() + " --from-manifest " + (dir / "a" / "manifest.json").string(), dir), 0)
        << read_text(dir / "stderr.txt");
    for (const char* name : {"field.csv", "residual.csv", "trace.csv"}) {
        const std::string a = read_text(dir / "a" / name);
        EXPECT_EQ(a, read_text(dir / "b" / name)) << name;
        EXPECT_EQ(a, read_text(dir / "c" / name)) << name;
    }
}

TEST(Cli, SimulateIsDeterministic)
{
    const fs::path dir = scratch("simulate");
    const std::string base = " simulate --problem " + kConfigs + "american_put.toml --steps 50 --paths 20 --seed 7";
    ASSERT_EQ(run("--out " + (dir / "a").string() + base, dir), 0) << read_text(dir / "stderr.txt");
    ASSERT_EQ(run("--out " + (dir / "b").string() + base, dir), 0);
    EXPECT_EQ(read_text(dir / "a" / "paths.csv"), read_text(dir / "b" / "paths.csv"));
}

TEST(Cli, OutputDirectoryFromEnvironment)
{
    const fs::path dir = scratch("env");
    const std::string cmd = "GBSDE_OUT_DIR=\"" + (dir / "env_out").string() + "\" ";
    const std::string full = cmd + "\"" + GBSDE_CLI_PATH + "\" gexp --payoff squared-increment --times 1 --nx 81 "
                             "--sigma-lo-sq 1 --sigma-hi-sq 4 >/dev/null 2>&1";
    ASSERT_EQ(std::system(full.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "env_out" / "gexp.json"));
}

TEST(Cli, ExitCodes)
{
    const fs::path dir = scratch("codes");
    EXPECT_EQ(run("frobnicate", dir), 1);
    EXPECT_EQ(run("", dir), 1);
    EXPECT_EQ(run("solve --nx notanumber", dir), 1);

    EXPECT_EQ(run("--out " + (dir / "cmp").string() + " compare --problem-hi " + kConfigs + "american_put_lowered.toml"
                      + " --problem-lo " + kConfigs + "american_put.toml" + kSmallGrid,
                  dir),
              2);
    EXPECT_NE(read_text(dir / "stderr.txt").find("(ii)"), std::string::npos) << read_text(dir / "stderr.txt");

    EXPECT_EQ(run("--out " + (dir / "missing").string() + " solve --problem " + kConfigs + "nope.toml", dir), 2);

    EXPECT_EQ(run("--out " + (dir / "nc").string() + " solve --problem " + kConfigs + "american_put_rate.toml"
                      + " --nx 101 --j-max 1 --stop-tol 1e-9",
                  dir),
              3);
}

TEST(Cli, CompareOrderedPair)
{
    const fs::path dir = scratch("compare");
    ASSERT_EQ(run("--out " + (dir / "out").string() + " compare --problem-hi " + kConfigs + "american_put.toml"
                      + " --problem-lo " + kConfigs + "american_put_lowered.toml" + kSmallGrid,
                  dir),
              0)
        << read_text(dir / "stderr.txt");
    const std::string report = read_text(dir / "out" / "comparison.json");
    EXPECT_NE(report.find("\"violations\": 0"), std::string::npos) << report;
}

TEST(Cli, StudyWritesTable)
{
    const fs::path dir = scratch("study");
    ASSERT_EQ(run("--out " + (dir / "out").string() + " study --problem " + kConfigs + "american_put.toml --refine 1", dir),
              0)
        << read_text(dir / "stderr.txt");
    const std::string table = read_text(dir / "out" / "study.csv");
    EXPECT_EQ(table.substr(0, table.find('\n')), "level,nx,nt,dx,dt,value,residual_sup,residual_window,ratio,delta_prev");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}
