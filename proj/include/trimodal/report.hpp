#pragma once

// CSV and plain-text renderings of epoch logs and retrieval reports.

#include <charconv>
#include <cstdio>
#include <string>
#include <vector>

#include "trimodal/retrieval.hpp"
#include "trimodal/train.hpp"

namespace trimodal {

inline std::string format_number(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Shortest text that reads back to the same double.
inline std::string exact_number(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fixed(double v, int decimals) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string epoch_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,l_mt,l_mv,l_tv,l_align,l_recon,l_total,val_t2m_r1\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    for (double v : {e.lr, e.loss.l_mt, e.loss.l_mv, e.loss.l_tv, e.loss.l_align, e.loss.l_recon, e.loss.l_total,
                     e.val_t2m_r1})
      out += "," + exact_number(v);
    out += "\n";
  }
  return out;
}

inline std::string report_csv(const std::vector<RetrievalReport>& reports) {
  std::string out = "protocol,direction,gallery_size,seed";
  for (int k : kRecallRanks) out += ",R@" + std::to_string(k);
  out += ",MedR\n";
  for (const auto& r : reports) {
    out += r.protocol + "," + r.direction + "," + std::to_string(r.gallery_size) + "," + std::to_string(r.seed);
    for (double v : r.recall) out += "," + exact_number(v);
    out += "," + exact_number(r.medr) + "\n";
  }
  return out;
}

inline std::string report_table(const std::vector<RetrievalReport>& reports) {
  std::string out = pad("protocol", 20) + pad("direction", 16) + pad("N", 6);
  for (int k : kRecallRanks) out += pad("R@" + std::to_string(k), 8);
  out += pad("MedR", 8) + "\n";
  for (const auto& r : reports) {
    out += pad(r.protocol, 20) + pad(r.direction, 16) + pad(std::to_string(r.gallery_size), 6);
    for (double v : r.recall) out += pad(fixed(v, 2), 8);
    out += pad(fixed(r.medr, 1), 8) + "\n";
  }
  return out;
}

// Parses a file written by report_csv.
inline std::vector<RetrievalReport> parse_report_csv(const std::string& text) {
  std::vector<RetrievalReport> out;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw ParseError("report csv: missing header");
  std::size_t line_no = 1;
  while (++pos < text.size()) {
    ++line_no;
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = end == std::string::npos ? text.size() : end;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t s = 0;
    for (std::size_t c = line.find(','); ; c = line.find(',', s)) {
      cells.push_back(line.substr(s, c == std::string::npos ? std::string::npos : c - s));
      if (c == std::string::npos) break;
      s = c + 1;
    }
    if (cells.size() != 5 + kRecallRanks.size())
      throw ParseError("report csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(5 + kRecallRanks.size()) + " cells, found " + std::to_string(cells.size()));
    try {
      RetrievalReport r;
      r.protocol = cells[0];
      r.direction = cells[1];
      r.gallery_size = std::stoull(cells[2]);
      r.seed = std::stoull(cells[3]);
      for (std::size_t i = 0; i < kRecallRanks.size(); ++i) r.recall[i] = std::stod(cells[4 + i]);
      r.medr = std::stod(cells.back());
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("report csv line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

}  // namespace trimodal
