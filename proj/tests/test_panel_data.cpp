#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "csv.hpp"
#include "errors.hpp"
#include "panel_data.hpp"
#include "test_support.hpp"

using namespace twmq;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "./" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load sample with unit population") {
  const std::string sample = write_temp(
      "s1.csv",
      "d,t,j,y,x1\n"
      "1,1,1,10.5,2.0\n"
      "1,1,2,11.0,3.0\n"
      "1,1,3,9.0,1.0\n");
  const std::string pop = write_temp(
      "p1.csv",
      "d,t,j,x1,sampled\n"
      "1,1,1,2.0,1\n"
      "1,1,2,3.0,1\n"
      "1,1,3,1.0,1\n"
      "1,1,4,4.0,0\n"
      "1,1,5,2.5,0\n"
      "1,1,6,0.5,0\n"
      "1,1,7,1.5,0\n"
      "1,1,8,2.2,0\n"
      "1,1,9,3.3,0\n"
      "1,1,10,1.1,0\n");
  const PanelFrame frame = load_frame(sample, pop, true);
  CHECK(frame.mode == FrameMode::UnitPopulation);
  CHECK(frame.n_dt(0, 0) == 3);
  CHECK(frame.N_dt(0, 0) == 10);
  CHECK(frame.p == 2);  // intercept added
  CHECK(frame.X(0, 0) == 1.0);
  CHECK(frame.rsum[0][0] == doctest::Approx(7.0));  // head count of r_dt
  CHECK(frame.rsum[0][1] == doctest::Approx(4.0 + 2.5 + 0.5 + 1.5 + 2.2 + 3.3 + 1.1));
}

TEST_CASE("load errors carry row context") {
  const std::string missing_y = write_temp(
      "s2.csv",
      "d,t,j,y,x1\n"
      "1,1,1,,2.0\n");
  CHECK_THROWS_WITH_AS(load_frame(missing_y, "", true),
                       doctest::Contains("missing response"), Error);

  const std::string dup = write_temp(
      "s3.csv",
      "d,t,j,y,x1\n"
      "1,1,1,1.0,2.0\n"
      "1,1,1,2.0,3.0\n");
  CHECK_THROWS_WITH_AS(load_frame(dup, "", true), doctest::Contains("duplicate"), Error);

  const std::string sample = write_temp(
      "s4.csv",
      "d,t,j,y,x1\n"
      "1,1,1,1.0,2.0\n"
      "1,1,2,2.0,3.0\n"
      "1,1,3,2.0,1.0\n");
  const std::string small_pop = write_temp(
      "p4.csv",
      "d,t,N,sx1\n"
      "1,1,2,0.0\n");
  CHECK_THROWS_WITH_AS(load_frame(sample, small_pop, true),
                       doctest::Contains("sample exceeds population"), Error);
}

TEST_CASE("totals mode carries non-sampled covariate sums") {
  const std::string sample = write_temp(
      "s5.csv",
      "d,t,j,y,x1\n"
      "1,1,1,10.0,2.0\n"
      "2,1,1,12.0,1.0\n");
  const std::string totals = write_temp(
      "p5.csv",
      "d,t,N,sx1\n"
      "1,1,5,8.0\n"
      "2,1,4,6.0\n");
  const PanelFrame frame = load_frame(sample, totals, true);
  CHECK(frame.mode == FrameMode::TotalsOnly);
  CHECK(frame.N_dt(0, 0) == 5);
  CHECK(frame.rsum[frame.cell(1, 1)][0] == doctest::Approx(4.0));
  CHECK(frame.rsum[frame.cell(1, 1)][1] == doctest::Approx(8.0));
  CHECK(frame.rsum[frame.cell(2, 1)][0] == doctest::Approx(3.0));
}

TEST_CASE("census fallback without population file") {
  const std::string sample = write_temp(
      "s6.csv",
      "d,t,j,y,x1\n"
      "1,1,1,10.0,2.0\n"
      "1,2,1,12.0,1.0\n");
  const PanelFrame frame = load_frame(sample, "", false);
  CHECK(frame.N_dt == frame.n_dt);
  CHECK(frame.p == 1);
  CHECK(frame.rsum[0].isZero());
}

TEST_CASE("relevant period ranges") {
  PanelFrame frame = test::make_frame(2, 10, 2, 4, 42);

  const RelevantSets rs3 = relevant_sets(frame, 3);
  CHECK(rs3.t_lo[4] == 3);  // t=5 covers {3,4,5}
  CHECK(rs3.contains(5, 3));
  CHECK(rs3.contains(5, 5));
  CHECK(!rs3.contains(5, 2));
  CHECK(!rs3.contains(5, 6));
  CHECK(rs3.t_lo[0] == 1);  // t=1 has no past information

  const RelevantSets rs0 = relevant_sets(frame, 0);
  CHECK(rs0.t_lo[6] == 7);  // t=7 alone

  for (int P : {0, 1, 3, 9}) {
    const RelevantSets rs = relevant_sets(frame, P);
    for (int t = 1; t <= 10; ++t) {
      const int width = t - rs.t_lo[t - 1] + 1;
      CHECK(width == std::min(t, std::max(P, 1)));
      CHECK(rs.t_lo[t - 1] >= 1);
      CHECK(rs.t_lo[t - 1] <= t);
    }
  }

  // pooled sizes add up over domains and periods
  const RelevantSets rs = relevant_sets(frame, 2);
  for (int t = 1; t <= 10; ++t) {
    long long n = 0;
    for (int d = 1; d <= 2; ++d)
      for (int i = rs.t_lo[t - 1]; i <= t; ++i) n += frame.n_dt(d - 1, i - 1);
    CHECK(rs.n_of_t[t - 1] == n);
  }
}

TEST_CASE("frame round-trip is bit exact") {
  const PanelFrame frame = test::make_frame(3, 4, 3, 6, 99);
  save_sample_csv(frame, "./rt_sample.csv", true);
  save_population_csv(frame, "./rt_pop.csv", true);
  const PanelFrame back = load_frame("./rt_sample.csv", "./rt_pop.csv", true);

  CHECK(back.D == frame.D);
  CHECK(back.T == frame.T);
  CHECK(back.p == frame.p);
  CHECK((back.n_dt - frame.n_dt).cwiseAbs().maxCoeff() == 0);
  CHECK((back.N_dt - frame.N_dt).cwiseAbs().maxCoeff() == 0);
  REQUIRE(back.y.size() == frame.y.size());
  for (Eigen::Index i = 0; i < frame.y.size(); ++i) CHECK(back.y[i] == frame.y[i]);
  CHECK((back.X - frame.X).cwiseAbs().maxCoeff() == 0.0);
  for (int d = 1; d <= frame.D; ++d) {
    for (int t = 1; t <= frame.T; ++t) {
      CHECK((back.rsum[frame.cell(d, t)] - frame.rsum[frame.cell(d, t)]).cwiseAbs().maxCoeff() ==
            0.0);
    }
  }
}
