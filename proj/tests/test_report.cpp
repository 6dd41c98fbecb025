#include <gtest/gtest.h>

#include "trimodal/report.hpp"

using namespace trimodal;

TEST(Report, ExactNumberIsShortestRoundTrip) {
  EXPECT_EQ(exact_number(0.8), "0.8");
  EXPECT_EQ(exact_number(2.5), "2.5");
  EXPECT_EQ(exact_number(100.0 / 3.0), "33.333333333333336");
  for (double v : {1e-5, 0.1 + 0.2, 19.117812345678, -3.0})
    EXPECT_EQ(std::stod(exact_number(v)), v);
}

TEST(Report, CsvRoundTrip) {
  RetrievalReport a;
  a.protocol = "small_batches";
  a.direction = "text->motion";
  a.recall = {100.0 / 3.0, 50, 62.5, 90, 100};
  a.medr = 1.6;
  a.gallery_size = 32;
  a.seed = 42;
  const auto back = parse_report_csv(report_csv({a}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].protocol, a.protocol);
  EXPECT_EQ(back[0].direction, a.direction);
  EXPECT_EQ(back[0].recall, a.recall);
  EXPECT_EQ(back[0].medr, a.medr);
  EXPECT_EQ(back[0].gallery_size, 32u);
  EXPECT_EQ(back[0].seed, 42u);
  EXPECT_THROW(parse_report_csv("protocol\nall,x"), ParseError);
}

TEST(Report, EpochCsvHasOneRowPerEpoch) {
  std::vector<EpochLog> log(3);
  for (std::size_t i = 0; i < 3; ++i) log[i].epoch = i;
  const auto csv = epoch_csv(log);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,l_mt,l_mv,l_tv,l_align,l_recon,l_total,val_t2m_r1");
}
