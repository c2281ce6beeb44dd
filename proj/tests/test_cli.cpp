// Golden harness for the command-line exit-code contract. Run as
//   test_cli <cli-binary> <fixtures-dir>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

int failures = 0;

int run(const std::string& cmd) {
  int rc = std::system((cmd + " > /dev/null 2> /dev/null").c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

void expect(const std::string& what, int got, int want) {
  if (got == want) {
    std::cout << "ok: " << what << " -> " << got << "\n";
  } else {
    std::cout << "FAIL: " << what << " -> " << got << " (want " << want << ")\n";
    ++failures;
  }
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: test_cli <cli> <fixtures>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::string fx = argv[2];
  const std::string tmp = "cli_tmp";
  std::system(("mkdir -p " + tmp).c_str());

  // solve + verify round trip
  expect("solve hedging",
         run(cli + " solve " + fx + "/hedging_binomial.json --out " + tmp + "/h1.json"), 0);
  expect("solve hedging again",
         run(cli + " solve " + fx + "/hedging_binomial.json --out " + tmp + "/h2.json"), 0);
  if (slurp(tmp + "/h1.json") != slurp(tmp + "/h2.json")) {
    std::cout << "FAIL: certificates differ between runs\n";
    ++failures;
  } else {
    std::cout << "ok: byte-identical certificates\n";
  }
  expect("verify hedging", run(cli + " verify " + fx + "/hedging_binomial.json " + tmp + "/h1.json"),
         0);

  // tampering flips the verdict
  {
    std::string text = slurp(tmp + "/h1.json");
    auto pos = text.find("\"y\"");
    pos = text.find("0.2", pos);
    text.replace(pos, 3, "0.9");
    std::ofstream out(tmp + "/tampered.json", std::ios::binary);
    out << text;
  }
  expect("verify tampered",
         run(cli + " verify " + fx + "/hedging_binomial.json " + tmp + "/tampered.json"), 1);
  expect("verify against wrong problem",
         run(cli + " verify " + fx + "/stopping_basic.json " + tmp + "/h1.json"), 65);

  // exit-code contract
  expect("gap above an absurd tolerance",
         run(cli + " solve " + fx + "/hedging_binomial.json --tol 1e-16 --out " + tmp + "/g.json"),
         2);
  expect("unbounded market", run(cli + " solve " + fx + "/arbitrage_linear.json --out " + tmp +
                                 "/a.json"),
         4);
  expect("malformed probabilities", run(cli + " solve " + fx + "/bad_probs.json"), 64);
  expect("missing file", run(cli + " solve " + fx + "/nonexistent.json"), 64);

  // exact mode
  expect("exact solve",
         run(cli + " solve " + fx + "/stopping_exact.json --exact --out " + tmp + "/e.json"), 0);
  expect("exact verify", run(cli + " verify " + fx + "/stopping_exact.json " + tmp + "/e.json"), 0);

  // rendering commands
  expect("dualize", run(cli + " dualize " + fx + "/lp_deterministic.json"), 0);
  expect("report", run(cli + " report " + fx + "/arbitrage_hinge.json"), 0);

  std::cout << (failures == 0 ? "all cli checks passed\n" : "cli checks FAILED\n");
  return failures == 0 ? 0 : 1;
}
