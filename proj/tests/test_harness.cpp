#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "privinfer/harness.hpp"

using namespace privinfer;

namespace {

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(Presets, BertShapes) {
  EXPECT_EQ(find_preset("qkv").n, 2304u);
  EXPECT_EQ(find_preset("h2").m, 3072u);
  EXPECT_EQ(find_preset("o").k, 128u);
  EXPECT_THROW(find_preset("ffn"), std::invalid_argument);
  RunConfig cfg;
  cfg.preset = "h1";
  EXPECT_EQ(layer_spec(cfg).poly_n, 1024u);
  cfg.full = true;
  EXPECT_EQ(layer_spec(cfg).poly_n, 8192u);
}

TEST(AutoWindow, FitsDegreeAndMatrix) {
  LinearLayerSpec s;
  s.k = 5;
  s.m = 30;
  s.n = 3;
  s.poly_n = 128;
  const WindowShape w = auto_window(s);
  EXPECT_LE(w.volume(), 128u);
  EXPECT_LE(w.n_w, 4u);
  EXPECT_LE(w.k_w, 8u);
}

TEST(Matmul, ReportColumnsAndDeterminism) {
  RunConfig cfg;
  cfg.k = 4;
  cfg.m = 6;
  cfg.n = 5;
  cfg.poly_n = 64;
  cfg.ell = 32;
  cfg.scale = 8;
  for (const char* proto : {"cop", "sip"}) {
    cfg.protocol = proto;
    const Report a = cmd_matmul(cfg);
    const Report b = cmd_matmul(cfg);
    EXPECT_TRUE(a.verified);
    EXPECT_EQ(a.transcript.messages, b.transcript.messages);
    std::ostringstream out;
    write_report_csv(out, a);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), kReportHeader);
  }
  cfg.protocol = "bogus";
  EXPECT_THROW(cmd_matmul(cfg), std::invalid_argument);
}

TEST(Fit, WritesModelAndRmse) {
  RunConfig cfg;
  cfg.template_name = "exp";
  cfg.model_out = tmp("privinfer_exp.model");
  const FitOutcome f = cmd_fit(cfg);
  EXPECT_LT(f.weighted_rmse, 0.02);
  EXPECT_EQ(load_model(cfg.model_out).breakpoints, f.model.breakpoints);
  std::ostringstream out;
  write_fit_table(out, f);
  EXPECT_NE(out.str().find("weighted_rmse"), std::string::npos);
  std::filesystem::remove(cfg.model_out);
}

TEST(Fit, RadiusZeroKeepsInit) {
  RunConfig cfg;
  cfg.template_name = "gelu";
  cfg.init = {-2.0, 0.5};
  cfg.radius = 0;
  const FitOutcome f = cmd_fit(cfg);
  EXPECT_EQ(f.candidates, 1u);
  EXPECT_DOUBLE_EQ(f.model.breakpoints[0], -2.0);
  EXPECT_DOUBLE_EQ(f.model.breakpoints[1], 0.5);
}

TEST(Nonlinear, AllOpsVerify) {
  RunConfig fit_cfg;
  const std::string gm = tmp("privinfer_g.model"), em = tmp("privinfer_e.model"), xin = tmp("privinfer_x.csv"),
                    yout = tmp("privinfer_y.csv");
  fit_cfg.template_name = "gelu";
  fit_cfg.model_out = gm;
  cmd_fit(fit_cfg);
  fit_cfg.template_name = "exp";
  fit_cfg.model_out = em;
  cmd_fit(fit_cfg);
  std::vector<double> v;
  for (int i = 0; i < 24; ++i) v.push_back(-5.0 + 0.4 * i);
  save_tensor_csv(xin, RingTensor::from_reals(RingParams{32, 12}, 3, 8, v));

  for (const char* op : {"gelu", "softmax"}) {
    RunConfig cfg;
    cfg.model_path = std::string(op) == "gelu" ? gm : em;
    cfg.tensor_path = xin;
    cfg.output_path = yout;
    cfg.op = op;
    const NonlinearOutcome out = cmd_nonlinear(cfg);
    EXPECT_TRUE(out.report.verified) << op << ": " << out.report.note;
    EXPECT_EQ(load_tensor_csv(yout).rows, 3u);
  }
  RunConfig wrong;
  wrong.model_path = gm;
  wrong.tensor_path = xin;
  wrong.op = "softmax";
  EXPECT_THROW(cmd_nonlinear(wrong), std::invalid_argument);
  for (const auto& p : {gm, em, xin, yout}) std::filesystem::remove(p);
}

TEST(Block, WithinToleranceAndTransportTransparent) {
  RunConfig cfg;
  const BlockOutcome a = cmd_block(cfg);
  EXPECT_TRUE(a.report.verified) << a.max_err;
  EXPECT_LE(a.max_err, std::ldexp(1.0, -8));
  parse_transport("tcp", cfg.run);
  const BlockOutcome b = cmd_block(cfg);
  EXPECT_EQ(a.report.transcript.messages, b.report.transcript.messages);
  EXPECT_EQ(a.output, b.output);
}

TEST(TensorCsv, HeaderOptionalAndCountChecked) {
  std::istringstream a("2,2,32,12\n1,2\n3,4\n");
  EXPECT_EQ(read_tensor_csv(a).rows, 2u);
  std::istringstream b("rows,cols,ell,scale\n1,3,32,12\n1,2\n");
  EXPECT_THROW(read_tensor_csv(b), std::invalid_argument);
}
