// privinfer_cli: run the secure linear and nonlinear protocols from the shell.
//
//   privinfer_cli matmul --protocol cop --preset o --report out.csv
//   privinfer_cli fit --template gelu --out gelu.model
//   privinfer_cli nonlinear --model gelu.model --tensor x.csv --op gelu --out y.csv
//   privinfer_cli block --transport tcp
//
// Exit codes: 0 ok, 1 usage or other error, 2 verification failure,
// 3 noise budget exceeded, 4 transport error.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "privinfer/privinfer.hpp"

using namespace privinfer;

namespace {

WindowShape parse_window(const std::string& s) {
  WindowShape w{0, 0, 0};
  if (s.empty()) return w;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> w.k_w >> c1 >> w.m_w >> c2 >> w.n_w) || c1 != ',' || c2 != ',')
    throw std::invalid_argument("--window expects kw,mw,nw");
  return w;
}

int emit(const Report& r, const std::string& path) {
  if (path.empty())
    write_report_csv(std::cout, r);
  else
    save_report_csv(path, r);
  if (!r.verified) {
    std::cerr << "verification failed: " << r.note << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure two-party transformer layer toolkit"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string transport = "inproc";
  if (const char* env = std::getenv("PRIVINFER_TRANSPORT")) transport = env;
  std::string window;
  bool no_verify = false;

  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--transport", transport, "inproc, tcp or tcp:PORT (env PRIVINFER_TRANSPORT)");
    sc->add_option("--seed", cfg.run.seed, "master seed");
    sc->add_option("--report", cfg.report_path, "write the CSV report here instead of stdout");
  };

  auto* mm = app.add_subcommand("matmul", "secure matrix product X * W, checked against plaintext");
  add_common(mm);
  mm->add_option("--protocol", cfg.protocol, "sip or cop")->check(CLI::IsMember({"sip", "cop"}));
  mm->add_option("-k", cfg.k, "rows of X");
  mm->add_option("-m", cfg.m, "inner dimension");
  mm->add_option("-n", cfg.n, "columns of W");
  mm->add_option("--preset", cfg.preset, "BERT-base layer: qkv, q, o, h1, h2");
  mm->add_option("-N,--poly-n", cfg.poly_n, "polynomial degree");
  mm->add_flag("--full", cfg.full, "use N = 8192");
  mm->add_option("--ell", cfg.ell, "ring bits");
  mm->add_option("--scale", cfg.scale, "fixed-point scale");
  mm->add_option("--q-bits", cfg.q_bits, "ciphertext modulus bits (0: default)");
  mm->add_option("--window", window, "SIP window kw,mw,nw");
  mm->add_option("--store", cfg.store_path, "COP: stream the encrypted weights through this file");
  mm->add_flag("--no-verify", no_verify, "report mismatches without failing");

  auto* fit = app.add_subcommand("fit", "fit a piecewise template to a histogram");
  fit->add_option("--histogram", cfg.histogram_path, "'lower upper count' lines; default synthetic");
  fit->add_option("--template", cfg.template_name, "gelu or exp")->check(CLI::IsMember({"gelu", "exp"}));
  fit->add_option("--init", cfg.init, "initial breakpoints");
  fit->add_option("--radius", cfg.radius, "search radius");
  fit->add_option("--step", cfg.step, "search step");
  fit->add_option("--out", cfg.model_out, "model file");

  auto* nl = app.add_subcommand("nonlinear", "secure GELU, exp or softmax of a tensor");
  add_common(nl);
  nl->add_option("--model", cfg.model_path, "fitted model file")->required();
  nl->add_option("--tensor", cfg.tensor_path, "input tensor CSV")->required();
  nl->add_option("--op", cfg.op, "gelu, exp or softmax")->check(CLI::IsMember({"gelu", "exp", "softmax"}));
  nl->add_option("--out", cfg.output_path, "output tensor CSV");

  auto* blk = app.add_subcommand("block", "linear layer followed by secure GELU across ring sizes");
  add_common(blk);
  blk->add_option("-k", cfg.k, "rows")->default_val(8);
  blk->add_option("-m", cfg.m, "inner dimension")->default_val(16);
  blk->add_option("-n", cfg.n, "columns")->default_val(16);
  blk->add_option("--model", cfg.model_path, "GELU model file; default fits the synthetic histogram");

  CLI11_PARSE(app, argc, argv);

  try {
    parse_transport(transport, cfg.run);
    cfg.window = parse_window(window);
    if (*mm) {
      Report r = cmd_matmul(cfg);
      const int rc = emit(r, cfg.report_path);
      return no_verify ? 0 : rc;
    }
    if (*fit) {
      const FitOutcome f = cmd_fit(cfg);
      write_fit_table(std::cout, f);
      return 0;
    }
    if (*nl) return emit(cmd_nonlinear(cfg).report, cfg.report_path);
    if (*blk) return emit(cmd_block(cfg).report, cfg.report_path);
  } catch (const NoiseBudgetExceeded& e) {
    std::cerr << "noise budget exceeded: " << e.what() << '\n';
    return 3;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
