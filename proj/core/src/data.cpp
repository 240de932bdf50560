#include "tagnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

namespace tagnn {

namespace {

bool parse_i64(std::string_view text, int64_t& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Fixed-width decimal field, e.g. year/month/day pieces of a timestamp.
bool parse_fixed(std::string_view text, size_t pos, size_t len, int& out) {
  if (pos + len > text.size()) return false;
  out = 0;
  for (size_t i = pos; i < pos + len; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') return false;
    out = out * 10 + (c - '0');
  }
  return true;
}

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<int64_t>(era) * 146097 + static_cast<int64_t>(doe) - 719468;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

bool parse_timestamp_ms(const std::string& text, int64_t& out_ms) {
  int y, mo, d;
  if (!parse_fixed(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || text[7] != '-' ||
      !parse_fixed(text, 5, 2, mo) || !parse_fixed(text, 8, 2, d))
    return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;

  int h = 0, mi = 0, s = 0, ms = 0;
  if (text.size() > 10) {
    if (text[10] != 'T' || text.size() < 19 || text[13] != ':' || text[16] != ':' ||
        !parse_fixed(text, 11, 2, h) || !parse_fixed(text, 14, 2, mi) ||
        !parse_fixed(text, 17, 2, s))
      return false;
    if (h > 23 || mi > 59 || s > 60) return false;
    size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      int digits = 0, scale = 100;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (digits < 3) ms += (text[pos] - '0') * scale;
        scale /= 10;
        ++digits;
        ++pos;
      }
      if (digits == 0) return false;
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size()) return false;
  }
  out_ms = ((days_from_civil(y, mo, d) * 24 + h) * 60 + mi) * 60000 + s * 1000LL + ms;
  return true;
}

LogFormat parse_log_format(const std::string& tag) {
  if (tag == "yoochoose") return LogFormat::yoochoose;
  if (tag == "diginetica") return LogFormat::diginetica;
  raise(ErrorKind::config, "unknown log format '" + tag + "' (expected yoochoose or diginetica)");
}

ParseResult parse_events(std::istream& source, LogFormat format) {
  ParseResult result;
  std::string line;
  bool header_pending = format == LogFormat::diginetica;
  while (std::getline(source, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header_pending) {
      header_pending = false;  // the view log carries a column-name header
      continue;
    }
    result.total_rows += 1;

    RawEvent ev;
    bool ok = false;
    if (format == LogFormat::yoochoose) {
      // session_id,ISO-8601 timestamp,item_id,category
      const auto f = split(line, ',');
      ok = f.size() >= 3 && !f[0].empty() && !f[2].empty() &&
           parse_timestamp_ms(std::string(f[1]), ev.timestamp_ms);
      if (ok) {
        ev.session_id = std::string(f[0]);
        ev.item_id = std::string(f[2]);
        ev.order_key = ev.timestamp_ms;
      }
    } else {
      // sessionId;userId;itemId;timeframe;eventdate
      const auto f = split(line, ';');
      ok = f.size() >= 5 && !f[0].empty() && !f[2].empty() && parse_i64(f[3], ev.order_key) &&
           parse_timestamp_ms(std::string(f[4]), ev.timestamp_ms);
      if (ok) {
        ev.session_id = std::string(f[0]);
        ev.item_id = std::string(f[2]);
      }
    }
    if (ok)
      result.events.push_back(std::move(ev));
    else
      result.skipped_rows += 1;
  }
  return result;
}

int Vocabulary::add(const std::string& ext) {
  auto [it, inserted] = index_of.try_emplace(ext, size());
  if (inserted) external.push_back(ext);
  return it->second;
}

int Vocabulary::require(const std::string& ext) const {
  auto it = index_of.find(ext);
  if (it == index_of.end())
    raise(ErrorKind::unknown_item, "unknown item id '" + ext + "'");
  return it->second;
}

Corpus build_and_filter(const std::vector<RawEvent>& events) {
  // Group by session id, preserving first-appearance order of sessions.
  std::unordered_map<std::string, size_t> group_of;
  std::vector<std::vector<const RawEvent*>> groups;
  for (const RawEvent& ev : events) {
    auto [it, inserted] = group_of.try_emplace(ev.session_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(&ev);
  }
  for (auto& g : groups)
    std::stable_sort(g.begin(), g.end(), [](const RawEvent* a, const RawEvent* b) {
      if (a->timestamp_ms != b->timestamp_ms) return a->timestamp_ms < b->timestamp_ms;
      return a->order_key < b->order_key;
    });

  std::unordered_map<std::string, int> item_count;
  for (const RawEvent& ev : events) item_count[ev.item_id] += 1;

  Corpus corpus;
  for (const auto& g : groups) {
    std::vector<const RawEvent*> kept;
    for (const RawEvent* ev : g)
      if (item_count[ev->item_id] >= 5) kept.push_back(ev);
    if (kept.size() < 2) continue;
    Session s;
    for (const RawEvent* ev : kept) s.items.push_back(corpus.vocab.add(ev->item_id));
    s.last_ts = kept.back()->timestamp_ms;
    corpus.sessions.push_back(std::move(s));
  }
  if (corpus.sessions.empty())
    raise(ErrorKind::data, "no sessions survive item/session filtering");
  return corpus;
}

SplitResult split_by_time(const std::vector<Session>& sessions, int64_t test_window_ms) {
  if (sessions.empty()) raise(ErrorKind::data, "cannot split an empty session list");
  if (test_window_ms <= 0)
    raise(ErrorKind::config, "test window must be positive, got " + std::to_string(test_window_ms) + "ms");

  int64_t max_ts = sessions.front().last_ts;
  for (const Session& s : sessions) max_ts = std::max(max_ts, s.last_ts);

  SplitResult r;
  r.boundary_ms = max_ts - test_window_ms;
  std::vector<Session> test_raw;
  for (const Session& s : sessions)
    (s.last_ts > r.boundary_ms ? test_raw : r.train).push_back(s);
  if (r.train.empty())
    raise(ErrorKind::data,
          "train split is empty at boundary " + std::to_string(r.boundary_ms) +
              "ms; shrink the test window");

  std::unordered_set<int> trained;
  for (const Session& s : r.train) trained.insert(s.items.begin(), s.items.end());
  for (Session& s : test_raw) {
    std::vector<int> kept;
    for (int item : s.items)
      if (trained.count(item)) kept.push_back(item);
    if (kept.size() < 2) continue;
    s.items = std::move(kept);
    r.test.push_back(std::move(s));
  }
  if (r.test.empty())
    raise(ErrorKind::data,
          "test split is empty at boundary " + std::to_string(r.boundary_ms) +
              "ms after removing untrained items");
  return r;
}

std::vector<Session> take_recent_fraction(std::vector<Session> sessions, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    raise(ErrorKind::config, "fraction must be in (0, 1], got " + std::to_string(fraction));
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const Session& a, const Session& b) { return a.last_ts < b.last_ts; });
  const size_t n = sessions.size();
  const auto count = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  std::vector<Session> out(sessions.end() - static_cast<ptrdiff_t>(std::min(count, n)),
                           sessions.end());
  return out;
}

std::vector<TrainExample> expand_prefixes(const Session& session) {
  if (session.items.size() < 2)
    raise(ErrorKind::contract,
          "cannot expand a session of length " + std::to_string(session.items.size()));
  std::vector<TrainExample> out;
  out.reserve(session.items.size() - 1);
  for (size_t k = 1; k < session.items.size(); ++k) {
    TrainExample ex;
    ex.prefix.assign(session.items.begin(), session.items.begin() + static_cast<ptrdiff_t>(k));
    ex.label = session.items[k];
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainExample> expand_all(const std::vector<Session>& sessions) {
  std::vector<TrainExample> out;
  for (const Session& s : sessions) {
    std::vector<TrainExample> ex = expand_prefixes(s);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

std::vector<std::vector<int>> make_batches(size_t n, int batch_size, Rng& rng) {
  if (batch_size < 1)
    raise(ErrorKind::config, "batch size must be at least 1, got " + std::to_string(batch_size));
  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<ptrdiff_t>(start),
                         order.begin() + static_cast<ptrdiff_t>(end));
  }
  return batches;
}

void write_examples(const std::string& path, const std::vector<TrainExample>& examples) {
  std::ofstream out(path);
  if (!out) raise(ErrorKind::data, "cannot open '" + path + "' for writing");
  for (const TrainExample& ex : examples) {
    out << ex.label << '\t';
    for (size_t i = 0; i < ex.prefix.size(); ++i) {
      if (i) out << ',';
      out << ex.prefix[i];
    }
    out << '\n';
  }
  if (!out) raise(ErrorKind::data, "write failed for '" + path + "'");
}

std::vector<TrainExample> read_examples(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::data, "cannot open examples file '" + path + "'");
  std::vector<TrainExample> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) raise(ErrorKind::data, where + ": missing tab separator");
    TrainExample ex;
    int64_t label;
    if (!parse_i64(std::string_view(line).substr(0, tab), label) || label < 0)
      raise(ErrorKind::data, where + ": bad label '" + line.substr(0, tab) + "'");
    ex.label = static_cast<int>(label);
    for (std::string_view piece : split(std::string_view(line).substr(tab + 1), ',')) {
      int64_t item;
      if (!parse_i64(piece, item) || item < 0)
        raise(ErrorKind::data, where + ": bad item index '" + std::string(piece) + "'");
      ex.prefix.push_back(static_cast<int>(item));
    }
    if (ex.prefix.empty()) raise(ErrorKind::data, where + ": empty prefix");
    out.push_back(std::move(ex));
  }
  return out;
}

void write_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) raise(ErrorKind::data, "cannot open '" + path + "' for writing");
  for (int i = 0; i < vocab.size(); ++i) out << i << '\t' << vocab.external[i] << '\n';
  if (!out) raise(ErrorKind::data, "write failed for '" + path + "'");
}

Vocabulary read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::checkpoint, "cannot open vocabulary file '" + path + "'");
  Vocabulary v;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      raise(ErrorKind::checkpoint, where + ": vocabulary line missing tab");
    int64_t idx;
    if (!parse_i64(std::string_view(line).substr(0, tab), idx) || idx != v.size())
      raise(ErrorKind::checkpoint, where + ": vocabulary indices must be dense and ascending");
    const std::string ext = line.substr(tab + 1);
    if (ext.empty()) raise(ErrorKind::checkpoint, where + ": empty external id");
    if (v.index_of.count(ext))
      raise(ErrorKind::checkpoint, where + ": duplicate external id '" + ext + "'");
    v.add(ext);
  }
  if (v.size() == 0) raise(ErrorKind::checkpoint, "vocabulary file '" + path + "' is empty");
  return v;
}

}  // namespace tagnn
