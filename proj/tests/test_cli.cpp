#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "fq/error.hpp"
#include "fq/model_io.hpp"
#include "support.hpp"

using namespace fq;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run fqtool(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) out.push_back(c);
  return out;
}

struct Workspace {
  std::filesystem::path dir;
  Workspace() : dir(std::filesystem::temp_directory_path() / ("fq_cli_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(dir);
  }
  ~Workspace() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("list parsing") {
  CHECK(cli::parse_int_list("256:512:64") == std::vector<int>{256, 320, 384, 448, 512});
  CHECK(cli::parse_int_list("3,7,1:3:1") == std::vector<int>{3, 7, 1, 2, 3});
  CHECK_THROWS_AS(cli::parse_int_list("a"), InvalidArgument);
  CHECK_THROWS_AS(cli::parse_int_list("5:1:1"), InvalidArgument);
  CHECK_THROWS_AS(cli::parse_int_list(""), InvalidArgument);
  CHECK(cli::parse_real_list("1/16,0.5") == std::vector<double>{0.0625, 0.5});
  CHECK(cli::parse_real("8") == 8.0);
  CHECK_THROWS_AS(cli::parse_real("1/0"), InvalidArgument);
  CHECK_THROWS_AS(cli::parse_real("x"), InvalidArgument);
}

TEST_CASE("usage errors") {
  CHECK(fqtool({}).code == cli::kUsage);
  CHECK(fqtool({"nonsense"}).code == cli::kUsage);
  CHECK(fqtool({"frame", "--bogus"}).code == cli::kUsage);
  CHECK(fqtool({"quantize", "--mode", "diagonal"}).code == cli::kUsage);
  CHECK(fqtool({"--help"}).code == cli::kOk);
}

TEST_CASE("frame command") {
  const Run ok = fqtool({"frame", "--harmonic", "-d", "256", "-N", "512"});
  CHECK(ok.code == cli::kOk);
  const auto rows = lines(ok.out);
  REQUIRE(rows.size() == 2);
  const auto cells = split(rows[1]);
  CHECK(cells[0] == "harmonic");
  CHECK(cells[3] == "true");
  CHECK(cells[4] == "true");
  CHECK(cells[5] == "2");

  CHECK(fqtool({"frame", "--harmonic", "-d", "3", "-N", "2"}).code == cli::kUsage);

  Workspace ws;
  {
    std::ofstream f(ws.path("scaled.txt"));
    f << "0.9 0 0\n0 0.9 0\n0 0 0.9\n";
  }
  CHECK(fqtool({"frame", "--explicit", ws.path("scaled.txt")}).code == cli::kConstraint);

  CHECK(fqtool({"frame", "-d", "4", "-N", "9", "--out", ws.path("h.fqf")}).code == cli::kOk);
  const Run reload = fqtool({"frame", "--explicit", ws.path("h.fqf"), "--format", "json"});
  CHECK(reload.code == cli::kOk);
  CHECK(reload.out.find("\"tight_ok\": true") != std::string::npos);
  CHECK(fqtool({"frame", "--explicit", ws.path("missing.fqf")}).code == cli::kData);
}

TEST_CASE("quantize, eval, storage, bounds") {
  Workspace ws;
  std::mt19937_64 rng(81);
  save_model(test::random_fnn({12, 8, 8, 4}, rng), ws.path("m.fqw"));

  const Run q = fqtool({"quantize", "--model", ws.path("m.fqw"), "--delta", "1/16", "-N", "32", "--out",
                        ws.path("m.fqq")});
  CHECK(q.code == cli::kOk);
  auto rows = lines(q.out);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "layer,matrix,mode,frame_d,N,K,delta,bits_per_code,code_bits");
  CHECK(split(rows[3])[2] == "row");
  CHECK(split(rows[1])[6] == "0.0625");

  const Run one = fqtool({"quantize", "--model", ws.path("m.fqw"), "--bits", "1", "-N", "32", "--out",
                          ws.path("b.fqq")});
  CHECK(one.code == cli::kOk);
  for (std::size_t i = 1; i < lines(one.out).size(); ++i) {
    CHECK(split(lines(one.out)[i])[5] == "1");
    CHECK(split(lines(one.out)[i])[7] == "1");
  }

  const Run tight = fqtool({"quantize", "--model", ws.path("m.fqw"), "--K", "1", "--delta", "0.001", "-N", "32",
                            "--out", ws.path("x.fqq")});
  CHECK(tight.code == cli::kConstraint);
  CHECK(tight.err.find("layer 0") != std::string::npos);

  const Run eval = fqtool({"eval", "--model", ws.path("m.fqw"), "--quantized", ws.path("m.fqq"), "--random-inputs",
                           "50", "--seed", "3"});
  CHECK(eval.code == cli::kOk);
  rows = lines(eval.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "N,delta,accuracy,float_accuracy,worst_error,mean_error,tightness");
  CHECK(split(rows[1])[3] == "1");

  CHECK(fqtool({"eval", "--model", ws.path("m.fqw"), "--data", ws.dir.string()}).code == cli::kData);
  CHECK(fqtool({"eval", "--model", ws.path("m.fqw")}).code == cli::kUsage);

  const Run storage = fqtool({"storage", "--quantized", ws.path("b.fqq")});
  CHECK(storage.code == cli::kOk);
  rows = lines(storage.out);
  REQUIRE(rows.size() == 5);
  CHECK(split(rows[4])[0] == "total");
  CHECK(split(rows[1])[8] == std::to_string(12 * 32));

  const Run bounds = fqtool({"bounds", "--model", ws.path("m.fqw"), "--quantized", ws.path("m.fqq"),
                             "--random-inputs", "100"});
  CHECK(bounds.code == cli::kOk);
  rows = lines(bounds.out);
  CHECK(rows.size() > 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(split(rows[i]).back() == "true");
  CHECK(bounds.out.find("FNN,network") != std::string::npos);

  save_model(test::random_fnn({12, 6, 4}, rng), ws.path("other.fqw"));
  CHECK(fqtool({"bounds", "--model", ws.path("other.fqw"), "--quantized", ws.path("m.fqq"), "--random-inputs", "5"})
            .code == cli::kData);

  std::ofstream(ws.path("junk.fqw")) << "XXXXjunk";
  CHECK(fqtool({"eval", "--model", ws.path("junk.fqw"), "--random-inputs", "3"}).code == cli::kData);
}

TEST_CASE("residual bounds through the CLI") {
  Workspace ws;
  std::mt19937_64 rng(82);
  save_model(test::random_resnet(6, 2, rng), ws.path("r.fqw"));
  const Run r = fqtool({"bounds", "--model", ws.path("r.fqw"), "--delta", "1/8", "-N", "24", "--random-inputs", "50"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("Residual,blocks 0-1") != std::string::npos);
}

TEST_CASE("sweep") {
  Workspace ws;
  std::mt19937_64 rng(83);
  save_model(test::random_fnn({10, 6, 6, 3}, rng), ws.path("m.fqw"));
  save_model(test::random_fnn({10, 6, 6, 3}, rng), ws.path("m2.fqw"));
  const std::vector<std::string> args{"sweep", "--model", ws.path("m.fqw"), "--model", ws.path("m2.fqw"), "-N",
                                      "40,20", "--delta", "1/4,1/16", "--random-inputs", "40", "--seed", "9"};
  const Run a = fqtool(args);
  const Run b = fqtool(args);
  CHECK(a.code == cli::kOk);
  CHECK(a.out == b.out);
  const auto rows = lines(a.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "N,delta,accuracy_mean,accuracy_std,worst_error,mean_error,tightness");
  CHECK(split(rows[1])[0] == "20");
  CHECK(split(rows[1])[1] == "0.0625");
  CHECK(split(rows[2])[1] == "0.25");
  CHECK(split(rows[3])[0] == "40");

  const Run cell = fqtool({"sweep", "--model", ws.path("m.fqw"), "-N", "20", "--delta", "1/16", "--random-inputs",
                           "40", "--seed", "9"});
  const Run eval = fqtool({"eval", "--model", ws.path("m.fqw"), "-N", "20", "--delta", "1/16", "--random-inputs", "40",
                           "--seed", "9"});
  const auto c = split(lines(cell.out)[1]);
  const auto e = split(lines(eval.out)[1]);
  CHECK(c[2] == e[2]);
  CHECK(c[4] == e[4]);
  CHECK(c[5] == e[5]);
  CHECK(c[6] == e[6]);

  const Run json = fqtool({"sweep", "--model", ws.path("m.fqw"), "-N", "20", "--delta", "1/16", "--random-inputs",
                           "5", "--format", "json", "--out", ws.path("s.json")});
  CHECK(json.code == cli::kOk);
  CHECK(json.out.empty());
  std::ifstream in(ws.path("s.json"));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"accuracy_mean\"") != std::string::npos);
}

TEST_CASE("onebit storage arithmetic") {
  Workspace ws;
  std::mt19937_64 rng(84);
  save_model(test::random_fnn({784, 256, 256, 10}, rng, 0.5), ws.path("mnist.fqw"));
  const Run r = fqtool({"onebit", "--model", ws.path("mnist.fqw"), "-N", "7000"});
  CHECK(r.code == cli::kOk);
  const auto rows = lines(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "N,delta,K,accuracy_mean,accuracy_std,code_bits,saved_bits,code_bits_all,saved_bits_all");
  const auto cells = split(rows[1]);
  CHECK(cells[1] == "8");
  CHECK(cells[2] == "1");
  CHECK(cells[5] == "7280000");
  CHECK(cells[6] == "1239680");
}
