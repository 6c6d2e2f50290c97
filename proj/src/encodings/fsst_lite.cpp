#include "fsst_lite.hpp"

#include <algorithm>
#include <map>

namespace minihouse::enc::detail {

namespace {
constexpr int kTrainingRounds = 5;
constexpr std::size_t kTrainingBytes = 1 << 16;
}  // namespace

void SymbolTable::add(std::string symbol) {
  const auto code = static_cast<std::uint8_t>(symbols_.size());
  auto& bucket = by_first_byte_[static_cast<std::uint8_t>(symbol[0])];
  symbols_.push_back(std::move(symbol));
  bucket.push_back(code);
  std::stable_sort(bucket.begin(), bucket.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return symbols_[a].size() > symbols_[b].size(); });
}

int SymbolTable::match(std::string_view text, std::size_t pos) const {
  for (auto code : by_first_byte_[static_cast<std::uint8_t>(text[pos])]) {
    const auto& s = symbols_[code];
    if (text.compare(pos, s.size(), s) == 0) return code;
  }
  return -1;
}

void SymbolTable::encode(std::string_view text, std::string& out) const {
  for (std::size_t pos = 0; pos < text.size();) {
    const int code = match(text, pos);
    if (code < 0) {
      out.push_back(static_cast<char>(kEscape));
      out.push_back(text[pos]);
      ++pos;
    } else {
      out.push_back(static_cast<char>(code));
      pos += symbols_[code].size();
    }
  }
}

// Iterative greedy construction: parse the sample with the current table, then keep the
// candidates (used symbols, literals and adjacent pairs) with the highest byte gain.
SymbolTable SymbolTable::train(const std::vector<std::string>& sample) {
  std::vector<std::string_view> texts;
  std::size_t budget = kTrainingBytes;
  for (const auto& s : sample) {
    if (s.empty()) continue;
    if (budget < s.size()) break;
    budget -= s.size();
    texts.emplace_back(s);
  }

  SymbolTable table;
  for (int round = 0; round < kTrainingRounds; ++round) {
    std::map<std::string, std::size_t> gain;
    for (auto text : texts) {
      std::string_view prev;
      for (std::size_t pos = 0; pos < text.size();) {
        const int code = table.match(text, pos);
        const std::size_t len = code < 0 ? 1 : table.symbols_[code].size();
        std::string_view cur = text.substr(pos, len);
        gain[std::string(cur)] += len;
        if (!prev.empty() && prev.size() + cur.size() <= kMaxSymbolLen) {
          std::string joined(prev);
          joined += cur;
          gain[joined] += joined.size();
        }
        prev = cur;
        pos += len;
      }
    }
    std::vector<std::pair<std::size_t, std::string>> ranked;
    ranked.reserve(gain.size());
    for (auto& [sym, g] : gain) ranked.emplace_back(g, sym);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    SymbolTable next;
    for (std::size_t i = 0; i < ranked.size() && i < kMaxSymbols; ++i) next.add(ranked[i].second);
    table = std::move(next);
  }
  return table;
}

void write_fsst(ByteWriter& w, const std::vector<std::string>& values) {
  const auto table = SymbolTable::train(values);
  w.put(static_cast<std::uint8_t>(table.size()));
  for (std::size_t i = 0; i < table.size(); ++i) {
    w.put(static_cast<std::uint8_t>(table.symbol(i).size()));
    w.put_bytes(table.symbol(i));
  }
  std::string codes;
  for (const auto& v : values) {
    codes.clear();
    table.encode(v, codes);
    w.put_string(codes);
  }
}

namespace {

std::vector<std::string> read_table(ByteReader& r) {
  const auto count = r.get<std::uint8_t>();
  std::vector<std::string> symbols;
  symbols.reserve(count);
  for (std::uint8_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint8_t>();
    if (len == 0 || len > kMaxSymbolLen) r.raise("FSST: symbol length " + std::to_string(len));
    auto raw = r.get_bytes(len);
    symbols.emplace_back(reinterpret_cast<const char*>(raw.data()), raw.size());
  }
  return symbols;
}

}  // namespace

std::vector<std::string> read_fsst(ByteReader& r, std::size_t n) {
  const auto symbols = read_table(r);
  if (r.remaining() / 4 < n) r.raise("FSST: payload too short for row count");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto codes = r.get_string();
    std::string s;
    for (std::size_t k = 0; k < codes.size(); ++k) {
      const auto c = static_cast<std::uint8_t>(codes[k]);
      if (c == kEscape) {
        if (++k == codes.size()) r.raise("FSST: dangling escape");
        s.push_back(codes[k]);
      } else if (c < symbols.size()) {
        s += symbols[c];
      } else {
        r.raise("FSST: code outside symbol table");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t fsst_code_bytes(const EncodedBlock& block) {
  ByteReader r{ByteSpan(block.payload)};
  read_table(r);
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < block.row_count; ++i) total += r.get_string().size();
  return total;
}

}  // namespace minihouse::enc::detail
