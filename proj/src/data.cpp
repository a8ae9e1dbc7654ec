#include "lvst/data.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lvst {

namespace {

struct Timestamp {
  int minute_of_day = 0;
  int weekday = 0;  // Monday = 0
};

Timestamp parse_timestamp(const std::string& iso) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const int got = std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
  if (got < 5) throw InputError("start timestamp '" + iso + "' is not ISO-8601 (YYYY-MM-DDTHH:MM)");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59) {
    throw InputError("start timestamp '" + iso + "' is not a valid date-time");
  }
  const std::chrono::weekday wd{std::chrono::sys_days{ymd}};
  return {h * 60 + mi, static_cast<int>(wd.iso_encoding()) - 1};
}

bool is_gap(const std::string& cell) {
  std::string c;
  for (char ch : cell)
    if (!std::isspace(static_cast<unsigned char>(ch))) c.push_back(static_cast<char>(std::tolower(ch)));
  return c.empty() || c == "nan" || c == "na";
}

}  // namespace

std::size_t ReadingsTable::steps_per_day() const {
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0) {
    throw InputError("interval " + std::to_string(interval_minutes) + " min does not divide a day");
  }
  return static_cast<std::size_t>(1440 / interval_minutes);
}

ReadingsTable parse_readings(std::istream& in) {
  ReadingsTable t;
  std::string header;
  if (!std::getline(in, header)) throw InputError("readings file is empty");
  {
    std::istringstream hs(header);
    std::string hash, kw;
    hs >> hash >> kw;
    if (hash != "#" || kw != "readings") throw InputError("readings line 1: bad header '" + header + "'");
    bool have_n = false;
    std::string field;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw InputError("readings line 1: bad field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      try {
        if (key == "N") {
          t.n_nodes = std::stoul(val);
          have_n = true;
        } else if (key == "interval") {
          t.interval_minutes = std::stoi(val);
        } else if (key == "start") {
          t.start = val;
        }
      } catch (const std::exception&) {
        throw InputError("readings line 1: bad value in '" + field + "'");
      }
    }
    if (!have_n || t.n_nodes == 0) throw InputError("readings line 1: missing N=<count>");
  }
  (void)t.steps_per_day();
  (void)parse_timestamp(t.start);

  const std::size_t n = t.n_nodes;
  std::vector<double> values;
  std::vector<char> missing;
  std::string raw;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.empty() || raw[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream rs(raw);
    while (std::getline(rs, cell, ',')) cells.push_back(cell);
    if (!raw.empty() && raw.back() == ',') cells.emplace_back();
    if (cells.size() != n) {
      throw InputError("readings line " + std::to_string(line) + ": expected " + std::to_string(n) +
                       " values, got " + std::to_string(cells.size()));
    }
    for (const std::string& c : cells) {
      if (is_gap(c)) {
        values.push_back(0.0);
        missing.push_back(1);
        continue;
      }
      double v = 0.0;
      try {
        v = std::stod(c);
      } catch (const std::exception&) {
        throw InputError("readings line " + std::to_string(line) + ": bad number '" + c + "'");
      }
      if (!std::isfinite(v)) throw InputError("readings line " + std::to_string(line) + ": non-finite value");
      values.push_back(v);
      missing.push_back(0);
    }
  }
  const std::size_t steps = values.size() / n;
  if (steps == 0) throw InputError("readings file has no rows");

  for (std::size_t i = 0; i < n; ++i) {
    std::size_t first = steps;
    for (std::size_t s = 0; s < steps; ++s)
      if (!missing[s * n + i]) {
        first = s;
        break;
      }
    if (first == steps) throw InputError("node " + std::to_string(i) + " has no readings");
    for (std::size_t s = 0; s < steps; ++s) {
      if (!missing[s * n + i]) continue;
      ++t.gaps_filled;
      values[s * n + i] = s < first ? values[first * n + i] : values[(s - 1) * n + i];
    }
  }
  t.values = Tensor({steps, n}, std::move(values));
  return t;
}

ReadingsTable load_readings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open readings file " + path);
  return parse_readings(in);
}

void write_readings(std::ostream& out, const ReadingsTable& t) {
  out << "# readings N=" << t.n_nodes << " interval=" << t.interval_minutes << " start=" << t.start << '\n';
  out.precision(17);
  for (std::size_t s = 0; s < t.n_steps(); ++s) {
    for (std::size_t i = 0; i < t.n_nodes; ++i) {
      if (i) out << ',';
      out << t.values(s, i);
    }
    out << '\n';
  }
}

void save_readings(const std::string& path, const ReadingsTable& t) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_readings(out, t);
}

CalendarIndex calendar_for(const ReadingsTable& t) {
  const Timestamp ts = parse_timestamp(t.start);
  const std::size_t interval = static_cast<std::size_t>(t.interval_minutes);
  CalendarIndex cal;
  cal.tod.resize(t.n_steps());
  cal.dow.resize(t.n_steps());
  for (std::size_t s = 0; s < t.n_steps(); ++s) {
    const std::size_t minutes = static_cast<std::size_t>(ts.minute_of_day) + s * interval;
    cal.tod[s] = (minutes % 1440) / interval;
    cal.dow[s] = (static_cast<std::size_t>(ts.weekday) + minutes / 1440) % 7;
  }
  return cal;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

SplitRanges chronological_split(std::size_t n_steps, const SplitRatios& r, std::size_t min_len) {
  if (r.train <= 0.0 || r.val <= 0.0 || r.test <= 0.0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  // The epsilon keeps e.g. 0.7 * 100 from flooring to 69.
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n_steps) * r.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n_steps) * r.val + 1e-9));
  SplitRanges s;
  s.train = {0, n_train};
  s.val = {n_train, std::min(n_steps, n_train + n_val)};
  s.test = {s.val.end, n_steps};
  for (auto [name, range] : {std::pair{"train", s.train}, std::pair{"val", s.val}, std::pair{"test", s.test}}) {
    if (range.size() < min_len) {
      throw ConfigError(std::string(name) + " split has " + std::to_string(range.size()) +
                        " steps, needs at least " + std::to_string(min_len));
    }
  }
  return s;
}

std::vector<std::size_t> make_windows(const StepRange& range, std::size_t input_len, std::size_t output_len) {
  std::vector<std::size_t> starts;
  const std::size_t span = input_len + output_len;
  if (range.size() < span) return starts;
  for (std::size_t s = range.begin; s + span <= range.end; ++s) starts.push_back(s);
  return starts;
}

Normalizer Normalizer::fit(const Tensor& values, const StepRange& range) {
  const std::size_t n = values.dim(1);
  const double count = static_cast<double>(range.size() * n);
  if (count == 0.0) throw InputError("cannot fit normalizer on an empty range");
  double mean = 0.0;
  for (std::size_t s = range.begin; s < range.end; ++s)
    for (std::size_t i = 0; i < n; ++i) mean += values(s, i);
  mean /= count;
  double var = 0.0;
  for (std::size_t s = range.begin; s < range.end; ++s)
    for (std::size_t i = 0; i < n; ++i) var += (values(s, i) - mean) * (values(s, i) - mean);
  var /= count;
  // A constant training period has no spread; unit scale keeps the map invertible.
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

std::string normalizer_to_json(const Normalizer& n) {
  nlohmann::json j = {{"mean", n.mean}, {"std", n.std}};
  return j.dump(2);
}

Normalizer normalizer_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Normalizer n{j.at("mean").get<double>(), j.at("std").get<double>()};
    if (!(n.std > 0.0)) throw InputError("normalizer std must be > 0");
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad normalizer JSON: ") + e.what());
  }
}

const std::vector<std::size_t>& WindowedDataset::windows(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train_windows;
    case Split::kVal:
      return val_windows;
    case Split::kTest:
      return test_windows;
  }
  return test_windows;
}

const StepRange& WindowedDataset::range(Split s) const {
  switch (s) {
    case Split::kTrain:
      return splits.train;
    case Split::kVal:
      return splits.val;
    case Split::kTest:
      return splits.test;
  }
  return splits.test;
}

Tensor slice_steps(const Tensor& values, const StepRange& range) {
  if (range.end > values.dim(0) || range.begin >= range.end) throw InputError("step range outside data");
  const std::size_t n = values.dim(1);
  Tensor out({range.size(), n});
  std::copy_n(values.data() + range.begin * n, range.size() * n, out.data());
  return out;
}

WindowedDataset make_dataset(const ReadingsTable& table, const SplitRatios& ratios, std::size_t input_len,
                             std::size_t output_len) {
  WindowedDataset d;
  d.raw = table.values;
  d.calendar = calendar_for(table);
  d.input_len = input_len;
  d.output_len = output_len;
  d.steps_per_day = table.steps_per_day();
  d.splits = chronological_split(table.n_steps(), ratios, input_len + output_len);
  d.normalizer = Normalizer::fit(d.raw, d.splits.train);
  d.normalized = Tensor(d.raw.shape());
  for (std::size_t i = 0; i < d.raw.size(); ++i) d.normalized[i] = d.normalizer.apply(d.raw[i]);
  d.train_windows = make_windows(d.splits.train, input_len, output_len);
  d.val_windows = make_windows(d.splits.val, input_len, output_len);
  d.test_windows = make_windows(d.splits.test, input_len, output_len);
  return d;
}

void set_normalizer(WindowedDataset& data, const Normalizer& n) {
  if (!(n.std > 0.0) || !std::isfinite(n.mean)) throw InputError("normalizer needs finite mean and positive std");
  data.normalizer = n;
  for (std::size_t i = 0; i < data.raw.size(); ++i) data.normalized[i] = n.apply(data.raw[i]);
}

Batch assemble_batch(const WindowedDataset& data, std::span<const std::size_t> starts) {
  const std::size_t b = starts.size(), t = data.input_len, h = data.output_len, n = data.n_nodes();
  Batch batch{Tensor({b, t, n}), Tensor({b, h, n}), {}};
  batch.cal.tod.reserve(b * t);
  batch.cal.dow.reserve(b * t);
  for (std::size_t w = 0; w < b; ++w) {
    const std::size_t s0 = starts[w];
    if (s0 + t + h > data.raw.dim(0)) throw InputError("window at step " + std::to_string(s0) + " overruns data");
    std::copy_n(data.normalized.data() + s0 * n, t * n, batch.x.data() + w * t * n);
    std::copy_n(data.normalized.data() + (s0 + t) * n, h * n, batch.y.data() + w * h * n);
    for (std::size_t k = 0; k < t; ++k) {
      batch.cal.tod.push_back(data.calendar.tod[s0 + k]);
      batch.cal.dow.push_back(data.calendar.dow[s0 + k]);
    }
  }
  return batch;
}

Tensor raw_targets(const WindowedDataset& data, std::span<const std::size_t> starts) {
  const std::size_t b = starts.size(), t = data.input_len, h = data.output_len, n = data.n_nodes();
  Tensor y({b, h, n});
  for (std::size_t w = 0; w < b; ++w)
    std::copy_n(data.raw.data() + (starts[w] + t) * n, h * n, y.data() + w * h * n);
  return y;
}

}  // namespace lvst
