#include <catch2/catch_amalgamated.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "stimulheat/trace_io.hpp"
#include "stimulheat/vectors.hpp"

extern char** environ;

namespace fs = std::filesystem;

namespace {

const std::string kCli = STIMULHEAT_CLI;
const std::string kSim = STIMULHEAT_SIM;

struct Result {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs a shell command line, capturing stdout; stderr is discarded.
Result run(const std::string& command) {
  Result r;
  FILE* pipe = ::popen((command + " 2>/dev/null").c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Result cli(const std::string& args) { return run(quote(kCli) + " " + args); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stimulheat_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A daemon on ephemeral ports, stopped with SIGTERM.
class Daemon {
 public:
  Daemon() {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, fds[0]);
    std::vector<std::string> args{kSim, "--fast", "--tcp-port", "0", "--ws-port", "0"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    REQUIRE(posix_spawn(&pid_, kSim.c_str(), &actions, nullptr, argv.data(), environ) == 0);
    posix_spawn_file_actions_destroy(&actions);
    ::close(fds[1]);
    out_ = ::fdopen(fds[0], "r");
    char line[512];
    REQUIRE(std::fgets(line, sizeof line, out_) != nullptr);
    banner_ = line;
    std::smatch m;
    REQUIRE(std::regex_search(banner_, m, std::regex("tcp=([0-9.]+):([0-9]+)")));
    addr_ = m[1].str() + ":" + m[2].str();
  }

  ~Daemon() {
    if (pid_ > 0) (void)stop();
    if (out_) std::fclose(out_);
  }

  // Sends SIGTERM; returns the exit code and the farewell line.
  std::pair<int, std::string> stop() {
    ::kill(pid_, SIGTERM);
    char line[512] = {};
    std::string rest;
    while (std::fgets(line, sizeof line, out_)) rest += line;
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, rest};
  }

  const std::string& addr() const { return addr_; }
  const std::string& banner() const { return banner_; }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  std::string banner_;
  std::string addr_;
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(cli("--help").code == 0);
  CHECK(run(quote(kSim) + " --help").code == 0);
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("set-level lukewarm").code == 1);
  CHECK(run(quote(kSim) + " --bogus").code == 1);
}

TEST_CASE("range violations exit 3 before touching the network") {
  CHECK(cli("--addr 127.0.0.1:1 set-temp 50").code == 3);
  CHECK(cli("--addr 127.0.0.1:1 set-temp 14.99").code == 3);
  CHECK(cli("--addr 127.0.0.1:1 set-heat -- -9.5").code == 3);
  CHECK(cli("--addr 127.0.0.1:1 set-heat 9.001").code == 3);
}

TEST_CASE("connection failures exit 2") {
  CHECK(cli("--addr 127.0.0.1:1 connect").code == 2);
  CHECK(cli("--addr 127.0.0.1:1 status").code == 2);
}

TEST_CASE("headless scenarios, metrics, replay and plots") {
  const auto dir = scratch("offline");
  const auto csv = dir / "heat.csv";
  REQUIRE(run(quote(kSim) + " --scenario charac-heat --out " + quote(csv.string())).code == 0);
  CHECK(line_count(csv) == 6501);

  const auto local = dir / "temp.jsonl";
  REQUIRE(cli("scenario --local --scenario charac-temp --out " + quote(local.string())).code == 0);
  CHECK(line_count(local) == 6500);

  const auto m = cli("metrics " + quote(csv.string()) + " --scenario charac-heat");
  REQUIRE(m.code == 0);
  CHECK(m.out.find("response_time_s") != std::string::npos);
  CHECK(line_count(csv) > 0);
  std::size_t rows = 0;
  for (char c : m.out) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 7);
  const auto all = cli("metrics " + quote(csv.string()) + " --all --format jsonl");
  REQUIRE(all.code == 0);
  std::size_t json_rows = 0;
  for (char c : all.out) json_rows += c == '\n' ? 1 : 0;
  CHECK(json_rows == 12);

  const auto converted = dir / "heat.jsonl";
  REQUIRE(cli("replay " + quote(csv.string()) + " --out " + quote(converted.string())).code == 0);
  const auto a = stimulheat::load_trace(csv);
  const auto b = stimulheat::load_trace(converted);
  REQUIRE(a.size() == b.size());
  CHECK(a.back().t_abs_c == b.back().t_abs_c);
  const auto echoed = cli("replay " + quote(csv.string()));
  CHECK(echoed.out == slurp(csv));

  REQUIRE(cli("plot " + quote(csv.string()) + " --out " + quote((dir / "plots").string())).code == 0);
  std::size_t svgs = 0;
  for (const auto& e : fs::directory_iterator(dir / "plots")) svgs += e.path().extension() == ".svg" ? 1 : 0;
  CHECK(svgs == 7);
}

TEST_CASE("bad traces exit 4") {
  const auto dir = scratch("bad");
  std::ofstream(dir / "bad.csv") << "time_s,t_abs_c\n0,31\n";
  CHECK(cli("metrics " + quote((dir / "bad.csv").string())).code == 4);
  CHECK(cli("replay " + quote((dir / "missing.csv").string())).code == 4);
  CHECK(cli("plot " + quote((dir / "bad.csv").string()) + " --out " + quote(dir.string())).code == 4);
  std::ofstream(dir / "backwards.csv") << stimulheat::kTraceHeader << "\n1,31,31,31,0,0,0,heat,0,100\n"
                                       << "0.5,31,31,31,0,0,0,heat,0,100\n";
  CHECK(cli("metrics " + quote((dir / "backwards.csv").string())).code == 4);
}

TEST_CASE("test vectors export") {
  const auto dir = scratch("vectors");
  REQUIRE(cli("test-vectors --out " + quote((dir / "v.json").string())).code == 0);
  CHECK(slurp(dir / "v.json") == stimulheat::protocol::test_vectors_json());
  CHECK(cli("test-vectors").out == stimulheat::protocol::test_vectors_json());
}

TEST_CASE("live session against the daemon") {
  Daemon d;
  CHECK(d.banner().find("mode=fast") != std::string::npos);
  const std::string addr = "--addr " + d.addr() + " ";

  const auto info = cli(addr + "connect");
  CHECK(info.code == 0);
  CHECK(info.out.find("StimulHeat-SIM") != std::string::npos);
  CHECK(cli(addr + "on").code == 0);
  CHECK(cli(addr + "set-level very-cold --mode heat").code == 0);
  CHECK(cli(addr + "set-heat -- -2").code == 0);
  CHECK(cli(addr + "set-temp 33.5").code == 0);
  CHECK(cli(addr + "set-pid 1 1 0 0.6").code == 0);
  CHECK(cli(addr + "set-pid 1 1 0 0").code == 3);
  CHECK(cli(addr + "set-temp 50").code == 3);

  const auto status = cli(addr + "status");
  CHECK(status.code == 0);
  CHECK(status.out.find("temp") != std::string::npos);

  const auto dir = scratch("live");
  REQUIRE(cli(addr + "record --duration 2 --out " + quote((dir / "r.csv").string())).code == 0);
  CHECK(line_count(dir / "r.csv") == 21);
  CHECK(cli(addr + "off").code == 0);

  const auto [code, farewell] = d.stop();
  CHECK(code == 0);
  CHECK(farewell.find("stopped after") != std::string::npos);
}
