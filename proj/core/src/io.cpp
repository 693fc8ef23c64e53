#include "mpslam/io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mpslam/scenario.hpp"

namespace mpslam {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

constexpr char kMagic[8] = {'M', 'P', 'C', 'S', 'N', 'A', 'P', '1'};

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw ConfigError("", "cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ConfigError("", "cannot open for reading: " + path);
  return in;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json parse_json_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& ex) {
    throw ConfigError("", path + ": JSON parse error: " + ex.what());
  }
}

void dump_json_file(const std::string& path, const ordered& doc) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << doc.dump(2) << "\n";
}

ordered arr3(const Vec3& v) { return ordered::array({v.x(), v.y(), v.z()}); }

Vec3 to_vec3(const json& a, const std::string& what) {
  if (!a.is_array() || a.size() != 3) throw ConfigError("", what + ": expected [x, y, z]");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

void write_snapshots(const std::string& path, const SnapshotSeries& series) {
  series.rf.validate();
  std::ofstream out = open_out(path, std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t n = (std::uint32_t)series.size();
  const std::uint32_t nf = (std::uint32_t)series.rf.nf;
  const std::uint32_t nrx = (std::uint32_t)series.rf.nrx();
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&nf), 4);
  out.write(reinterpret_cast<const char*>(&nrx), 4);
  const int dim = series.rf.dim();
  for (const VecXc& y : series.y) {
    if (y.size() != dim) throw std::invalid_argument("write_snapshots: snapshot size mismatch");
    out.write(reinterpret_cast<const char*>(y.data()), (std::streamsize)(16 * (std::size_t)dim));
  }
  if (!out) throw ConfigError("", "write failed: " + path);

  ordered side;
  ordered rf;
  rf["fc_hz"] = series.rf.fc_hz;
  rf["bw_hz"] = series.rf.bw_hz;
  rf["nf"] = series.rf.nf;
  ordered els = ordered::array();
  for (int c = 0; c < series.rf.elements_wl.cols(); ++c)
    els.push_back(ordered::array({series.rf.elements_wl(0, c), series.rf.elements_wl(1, c),
                                  series.rf.elements_wl(2, c)}));
  rf["elements_wl"] = std::move(els);
  side["rf"] = std::move(rf);
  side["seed"] = series.seed;
  side["dt_s"] = series.dt_s;
  dump_json_file(path + ".json", side);
}

SnapshotSeries read_snapshots(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("", path + ": bad snapshot magic (expected MPCSNAP1)");
  std::uint32_t n = 0, nf = 0, nrx = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&nf), 4);
  in.read(reinterpret_cast<char*>(&nrx), 4);
  if (!in) throw ConfigError("", path + ": truncated snapshot header");

  const json side = parse_json_file(path + ".json");
  SnapshotSeries series;
  try {
    const json& rf = side.at("rf");
    series.rf.fc_hz = rf.at("fc_hz").get<double>();
    series.rf.bw_hz = rf.at("bw_hz").get<double>();
    series.rf.nf = rf.at("nf").get<int>();
    const json& els = rf.at("elements_wl");
    series.rf.elements_wl.resize(3, (Eigen::Index)els.size());
    for (std::size_t c = 0; c < els.size(); ++c) {
      const Vec3 e = to_vec3(els[c], "elements_wl");
      series.rf.elements_wl.col((Eigen::Index)c) = e;
    }
    series.seed = side.at("seed").get<std::uint64_t>();
    if (side.contains("dt_s")) series.dt_s = side.at("dt_s").get<double>();
  } catch (const json::exception& ex) {
    throw ConfigError("", path + ".json: " + ex.what());
  }
  try {
    series.rf.validate();
  } catch (const std::exception& ex) {
    throw ConfigError("", path + ".json: " + ex.what());
  }
  if ((std::uint32_t)series.rf.nf != nf || (std::uint32_t)series.rf.nrx() != nrx)
    throw ConfigError("", path + ": header dimensions disagree with sidecar");
  const int dim = series.rf.dim();
  series.y.assign(n, VecXc(dim));
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(series.y[i].data()), (std::streamsize)(16 * (std::size_t)dim));
    if (!in) throw ConfigError("", path + ": truncated snapshot body");
  }
  return series;
}

void write_truth(const std::string& path, const TruthFile& truth) {
  ordered doc;
  doc["dt_s"] = truth.dt_s;
  ordered ag = ordered::array();
  for (const Vec3& p : truth.agents) ag.push_back(arr3(p));
  doc["agents"] = std::move(ag);
  ordered fs = ordered::array();
  for (std::size_t l = 0; l < truth.features.size(); ++l) {
    ordered f;
    f["pos"] = arr3(truth.features[l]);
    f["order"] = l < truth.feature_order.size() ? truth.feature_order[l] : 0;
    fs.push_back(std::move(f));
  }
  doc["features"] = std::move(fs);
  ordered ps = ordered::array();
  for (const auto& per_l : truth.params) {
    ordered row = ordered::array();
    for (const auto& v : per_l) row.push_back(ordered::array({v[0], v[1], v[2], v[3]}));
    ps.push_back(std::move(row));
  }
  doc["params"] = std::move(ps);
  dump_json_file(path, doc);
}

TruthFile read_truth(const std::string& path) {
  const json doc = parse_json_file(path);
  TruthFile t;
  try {
    t.dt_s = doc.value("dt_s", 1.0);
    for (const auto& a : doc.at("agents")) t.agents.push_back(to_vec3(a, "agents"));
    for (const auto& f : doc.at("features")) {
      t.features.push_back(to_vec3(f.at("pos"), "features/pos"));
      t.feature_order.push_back(f.value("order", 0));
    }
    if (doc.contains("params")) {
      for (const auto& per_l : doc.at("params")) {
        std::vector<std::array<double, 4>> row;
        for (const auto& v : per_l)
          row.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>(),
                         v.at(3).get<double>()});
        t.params.push_back(std::move(row));
      }
    }
  } catch (const json::exception& ex) {
    throw ConfigError("", path + ": " + ex.what());
  }
  return t;
}

void write_distance_table(const std::string& path, const std::vector<DistRow>& rows) {
  std::vector<DistRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(), [](const DistRow& a, const DistRow& b) {
    return a.n != b.n ? a.n < b.n : a.track < b.track;
  });
  std::ofstream out = open_out(path, std::ios::binary);
  out << "n,k,d_m,az_rad,el_rad,sinr_db\n";
  for (const DistRow& r : sorted)
    out << r.n << ',' << r.track << ',' << g17(r.d_m) << ',' << g17(r.az_rad) << ','
        << g17(r.el_rad) << ',' << g17(r.sinr_db) << '\n';
}

std::vector<DistRow> read_distance_table(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "n,k,d_m,az_rad,el_rad,sinr_db")
    throw ConfigError("", path + ": bad distance table header");
  std::vector<DistRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    DistRow r;
    char c1, c2, c3, c4, c5;
    std::istringstream ss(line);
    ss >> r.n >> c1 >> r.track >> c2 >> r.d_m >> c3 >> r.az_rad >> c4 >> r.el_rad >> c5 >>
        r.sinr_db;
    if (!ss || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',')
      throw ConfigError("", path + ": malformed row at line " + std::to_string(lineno));
    rows.push_back(r);
  }
  return rows;
}

void write_track_archive(const std::string& path, const std::vector<TrackRecord>& tracks) {
  std::ofstream out = open_out(path, std::ios::binary);
  for (const TrackRecord& t : tracks) {
    ordered rec;
    rec["id"] = t.id;
    rec["birth_n"] = t.birth_n;
    rec["death_n"] = t.death_n;
    rec["mean_sinr_db"] = t.mean_sinr_db;
    out << rec.dump() << "\n";
  }
}

std::vector<TrackRecord> read_track_archive(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<TrackRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      TrackRecord t;
      t.id = rec.at("id").get<int>();
      t.birth_n = rec.at("birth_n").get<int>();
      t.death_n = rec.at("death_n").get<int>();
      t.mean_sinr_db = rec.at("mean_sinr_db").get<double>();
      out.push_back(t);
    } catch (const json::exception& ex) {
      throw ConfigError("", path + ": line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

void write_detections(const std::string& path, const std::vector<Detection>& dets) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "k,d_m,az_rad,el_rad,aHH,pHH,aHV,pHV,aVH,pVH,aVV,pVV,beta_cum\n";
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const Detection& d = dets[k];
    out << k << ',' << g17(d.mu.d) << ',' << g17(d.mu.az) << ',' << g17(d.mu.el);
    for (int p = 0; p < 4; ++p)
      out << ',' << g17(std::abs(d.gamma(p))) << ',' << g17(std::arg(d.gamma(p)));
    out << ',' << g17(d.beta_cum) << '\n';
  }
}

void write_map_estimate(const std::string& path, const MapEstimate& est) {
  std::map<int, int> inlier_count;
  for (const auto& [k, n] : est.inliers) ++inlier_count[k];
  ordered doc;
  ordered fs = ordered::array();
  for (const auto& [k, p] : est.features) {
    ordered f;
    f["k"] = k;
    f["pos"] = arr3(p);
    f["inlier_count"] = inlier_count.count(k) ? inlier_count[k] : 0;
    fs.push_back(std::move(f));
  }
  doc["features"] = std::move(fs);
  ordered ag = ordered::array();
  for (const auto& [n, p] : est.agents) {
    ordered a;
    a["n"] = n;
    a["pos"] = arr3(p);
    ag.push_back(std::move(a));
  }
  doc["agents"] = std::move(ag);
  ordered inl = ordered::array();
  for (const auto& [k, n] : est.inliers) inl.push_back(ordered::array({k, n}));
  doc["inliers"] = std::move(inl);
  ordered stats;
  stats["inlier_ratio"] = est.inlier_ratio;
  stats["resid_std_m"] = est.resid_std;
  doc["stats"] = std::move(stats);
  ordered segs;
  segs["total"] = est.segments_total;
  segs["ok"] = est.segments_ok;
  ordered errs = ordered::array();
  for (const std::string& e : est.segment_errors) errs.push_back(e);
  segs["errors"] = std::move(errs);
  doc["segments"] = std::move(segs);
  dump_json_file(path, doc);
}

MapEstimate read_map_estimate(const std::string& path) {
  const json doc = parse_json_file(path);
  MapEstimate est;
  try {
    for (const auto& f : doc.at("features"))
      est.features[f.at("k").get<int>()] = to_vec3(f.at("pos"), "features/pos");
    for (const auto& a : doc.at("agents"))
      est.agents[a.at("n").get<int>()] = to_vec3(a.at("pos"), "agents/pos");
    for (const auto& i : doc.at("inliers"))
      est.inliers.push_back({i.at(0).get<int>(), i.at(1).get<int>()});
    est.inlier_ratio = doc.at("stats").at("inlier_ratio").get<double>();
    est.resid_std = doc.at("stats").at("resid_std_m").get<double>();
    if (doc.contains("segments")) {
      est.segments_total = doc["segments"].value("total", 0);
      est.segments_ok = doc["segments"].value("ok", 0);
      if (doc["segments"].contains("errors"))
        for (const auto& e : doc["segments"]["errors"])
          est.segment_errors.push_back(e.get<std::string>());
    }
  } catch (const json::exception& ex) {
    throw ConfigError("", path + ": " + ex.what());
  }
  return est;
}

void write_report(const std::string& path, const EvalReport& report) {
  ordered doc;
  doc["rmse_m"] = report.rmse_m;
  doc["max_dev_m"] = report.max_dev_m;
  doc["inlier_ratio"] = report.inlier_ratio;
  doc["resid_std_m"] = report.resid_std_m;
  dump_json_file(path, doc);
}

EvalReport read_report(const std::string& path) {
  const json doc = parse_json_file(path);
  EvalReport r;
  try {
    r.rmse_m = doc.at("rmse_m").get<double>();
    r.max_dev_m = doc.at("max_dev_m").get<double>();
    r.inlier_ratio = doc.at("inlier_ratio").get<double>();
    r.resid_std_m = doc.at("resid_std_m").get<double>();
  } catch (const json::exception& ex) {
    throw ConfigError("", path + ": " + ex.what());
  }
  return r;
}

}  // namespace mpslam
