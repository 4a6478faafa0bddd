#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "aifc/image.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(AIFC_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

// Shared fixture: a small config, its initial weights and a test image.
struct Workspace {
  fs::path dir = fs::temp_directory_path() / "aifc_test_cli";
  std::string cfg, weights, image;

  Workspace() {
    fs::create_directories(dir);
    cfg = (dir / "small.cfg").string();
    weights = (dir / "w.bin").string();
    image = (dir / "in.ppm").string();
    write_text(cfg,
               "aux_channels = 8,8,8\naux_latent = 8\nhyper_channels = 8\nfeat_c1 = 8\nfeat_c2 = 8\nfeat_c4 = 8\n"
               "feat_c16 = 8\nmain_full = 8\nmain_channels = 8,8,8\nmain_latent = 8\nnum_slices = 2\n"
               "main_segments = 2\npe_hidden = 8\n");
    aifc::Image img{40, 24, {}};
    for (int i = 0; i < 40 * 24 * 3; ++i) img.rgb.push_back(static_cast<std::uint8_t>((i * 7) % 251));
    aifc::write_ppm(image, img);
    const Result r = run("train --config " + cfg + " --output " + weights + " --steps 0");
    REQUIRE(r.code == 0);
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

std::string common(const Workspace& w) { return " --weights " + w.weights + " --config " + w.cfg; }

}  // namespace

TEST_CASE("cli encode, inspect and decode") {
  Workspace& w = ws();
  const std::string bin = (w.dir / "a.aifc").string(), recon = (w.dir / "recon.ppm").string(),
                    out = (w.dir / "out.ppm").string();
  Result r = run("encode --input " + w.image + common(w) + " --output " + bin + " --recon " + recon +
                 " --verify --report");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("roundtrip=exact\n") != std::string::npos);
  CHECK(r.out.find("bpp,psnr,aux_bytes,main_bytes,aux_ratio\n") != std::string::npos);

  r = run("inspect --input " + bin);
  CHECK(r.code == 0);
  CHECK(r.out.find("width: 40\n") != std::string::npos);
  CHECK(r.out.find("height: 24\n") != std::string::npos);
  CHECK(r.out.find("checksum_ok: yes") != std::string::npos);

  r = run("decode --input " + bin + common(w) + " --output " + out + " --verify " + recon);
  CHECK(r.code == 0);
  CHECK(r.out == "roundtrip=exact\n");
  CHECK(aifc::read_ppm(out) == aifc::read_ppm(recon));

  // Against the original the lossy result differs; exit code flags it.
  r = run("decode --input " + bin + common(w) + " --output " + out + " --verify " + w.image);
  CHECK(r.code == 4);
  CHECK(r.out.rfind("roundtrip=differs psnr=", 0) == 0);
}

TEST_CASE("cli error exit codes") {
  Workspace& w = ws();
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("encode --input " + (w.dir / "missing.ppm").string() + common(w) + " --output x").code == 2);

  const std::string bin = (w.dir / "b.aifc").string();
  REQUIRE(run("encode --input " + w.image + common(w) + " --output " + bin).code == 0);
  auto bytes = aifc::read_file(bin);
  bytes.back() ^= 0x40;
  const std::string bad = (w.dir / "bad.aifc").string();
  aifc::write_file(bad, bytes);
  CHECK(run("decode --input " + bad + common(w) + " --output " + (w.dir / "o.ppm").string()).code == 3);
  CHECK(run("inspect --input " + bad).code == 3);

  bytes.resize(20);
  aifc::write_file(bad, bytes);
  CHECK(run("inspect --input " + bad).code == 3);
}

TEST_CASE("cli bd-rate") {
  Workspace& w = ws();
  const fs::path a = w.dir / "anchor.csv", t = w.dir / "test.csv", far = w.dir / "far.csv";
  write_text(a, "bpp,psnr_db,lambda\n0.1,28,0\n0.2,30,0\n0.4,32,0\n0.8,34,0\n");
  write_text(t, "bpp,psnr_db,lambda\n0.09,28,0\n0.18,30,0\n0.36,32,0\n0.72,34,0\n");
  write_text(far, "bpp,psnr_db,lambda\n0.1,50,0\n0.2,52,0\n0.4,54,0\n0.8,56,0\n");
  Result r = run("bd-rate --anchor " + a.string() + " --test " + t.string());
  CHECK(r.code == 0);
  CHECK(r.out == "-10.00\n");
  CHECK(run("bd-rate --anchor " + a.string() + " --test " + far.string()).code == 5);
  write_text(far, "bpp,psnr_db,lambda\n0.1,x,0\n");
  CHECK(run("bd-rate --anchor " + a.string() + " --test " + far.string()).code == 2);
}

TEST_CASE("cli eval-curve writes an RD csv") {
  Workspace& w = ws();
  const fs::path images = w.dir / "images";
  fs::create_directories(images);
  fs::copy_file(w.image, images / "a.ppm", fs::copy_options::overwrite_existing);
  write_text(w.dir / "list.txt", "0.01 w.bin\n");
  const std::string csv = (w.dir / "rd.csv").string();
  const Result r = run("eval-curve --inputs " + images.string() + " --weights-list " + (w.dir / "list.txt").string() +
                       " --out " + csv);
  CHECK(r.code == 0);
  std::ifstream f(csv);
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  CHECK(header == "bpp,psnr_db,lambda");
  CHECK_FALSE(row.empty());
}

TEST_CASE("cli train writes loss trace and checkpoint") {
  Workspace& w = ws();
  const std::string out = (w.dir / "t.bin").string(), csv = (w.dir / "loss.csv").string(),
                    ck = (w.dir / "ck.bin").string();
  Result r = run("train --config " + w.cfg + " --output " + out + " --steps 2 --patches 2 --loss-csv " + csv +
                 " --checkpoint " + ck);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("steps=2 ", 0) == 0);
  r = run("train --config " + w.cfg + " --output " + out + " --steps 1 --patches 2 --resume " + ck);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("steps=3 ", 0) == 0);
}
