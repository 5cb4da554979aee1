#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hire/rating_graph.hpp"

namespace hire {

namespace {

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out = split_on(line, ",");
    for (auto& f : out) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
        std::size_t b = f.find_first_not_of(' ');
        if (b != std::string::npos && b > 0) f = f.substr(b);
    }
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing file: " + path);
    return f;
}

void warn_malformed(const std::string& file, std::size_t line_no, const std::string& why,
                    ParseStats* stats) {
    if (stats) ++stats->malformed_lines;
    std::cerr << file << ":" << line_no << ": skipped malformed line (" << why << ")\n";
}

// First listed value of a multi-valued field ("A|B|C" -> "A").
std::string first_value(const std::string& s) {
    std::size_t bar = s.find('|');
    return bar == std::string::npos ? s : s.substr(0, bar);
}

}  // namespace

RatingGraph parse_movielens(const std::string& dir, ParseStats* stats) {
    RatingGraph g;
    g.r_max = 5.0;
    g.user_slots.resize(4);
    g.user_slots[0].name = "age";
    g.user_slots[1].name = "occupation";
    g.user_slots[2].name = "gender";
    g.user_slots[3].name = "zip_prefix";
    g.item_slots.resize(4);
    g.item_slots[0].name = "rate";
    g.item_slots[1].name = "genre";
    g.item_slots[2].name = "director";
    g.item_slots[3].name = "actor";

    {  // users.dat: UserID::Gender::Age::Occupation::Zip-code
        auto f = open_or_throw(dir + "/users.dat");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto fields = split_on(line, "::");
            if (fields.size() != 5) {
                warn_malformed(dir + "/users.dat", line_no, "expected 5 fields", stats);
                continue;
            }
            // Zip codes are near-unique; keep only the leading digit as a
            // 10-way category.
            std::string zip = fields[4].empty() ? "?" : fields[4].substr(0, 1);
            std::vector<std::uint32_t> attrs{
                g.user_slots[0].intern(fields[2]), g.user_slots[1].intern(fields[3]),
                g.user_slots[2].intern(fields[1]), g.user_slots[3].intern(zip)};
            g.add_user(fields[0], std::move(attrs));
        }
    }
    {  // movies.dat: MovieID::Title::Genres[::Rate::Director::Actor]
        auto f = open_or_throw(dir + "/movies.dat");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto fields = split_on(line, "::");
            if (fields.size() != 3 && fields.size() != 6) {
                warn_malformed(dir + "/movies.dat", line_no, "expected 3 or 6 fields", stats);
                continue;
            }
            std::string rate = fields.size() == 6 ? fields[3] : "NA";
            std::string director = fields.size() == 6 ? first_value(fields[4]) : "NA";
            std::string actor = fields.size() == 6 ? first_value(fields[5]) : "NA";
            std::vector<std::uint32_t> attrs{
                g.item_slots[0].intern(rate), g.item_slots[1].intern(first_value(fields[2])),
                g.item_slots[2].intern(director), g.item_slots[3].intern(actor)};
            g.add_item(fields[0], std::move(attrs));
        }
    }
    {  // ratings.dat: UserID::MovieID::Rating::Timestamp
        auto f = open_or_throw(dir + "/ratings.dat");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto fields = split_on(line, "::");
            double r = 0;
            if (fields.size() != 4 || !parse_number(fields[2], r)) {
                warn_malformed(dir + "/ratings.dat", line_no, "expected u::i::r::t", stats);
                continue;
            }
            if (r < 1.0 || r > g.r_max) {
                warn_malformed(dir + "/ratings.dat", line_no, "rating outside 1..5", stats);
                continue;
            }
            auto u = g.user_index.find(fields[0]);
            auto i = g.item_index.find(fields[1]);
            if (u == g.user_index.end() || i == g.item_index.end()) {
                warn_malformed(dir + "/ratings.dat", line_no, "unknown endpoint", stats);
                continue;
            }
            if (!g.set_rating(u->second, i->second, r) && stats) ++stats->duplicate_pairs;
        }
    }
    return g;
}

RatingGraph parse_csv(const std::string& path, ParseStats* stats) {
    auto f = open_or_throw(path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty CSV (no header): " + path);
    auto header = split_csv_line(line);
    int col_user = -1, col_item = -1, col_rating = -1;
    std::vector<std::pair<int, int>> user_cols, item_cols;  // (column, slot)
    RatingGraph g;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h == "user") col_user = static_cast<int>(c);
        else if (h == "item") col_item = static_cast<int>(c);
        else if (h == "rating") col_rating = static_cast<int>(c);
        else if (h.rfind("user:", 0) == 0) {
            user_cols.emplace_back(static_cast<int>(c), static_cast<int>(g.user_slots.size()));
            g.user_slots.push_back({});
            g.user_slots.back().name = h.substr(5);
        } else if (h.rfind("item:", 0) == 0) {
            item_cols.emplace_back(static_cast<int>(c), static_cast<int>(g.item_slots.size()));
            g.item_slots.push_back({});
            g.item_slots.back().name = h.substr(5);
        } else {
            throw std::runtime_error("unknown CSV column '" + h + "' in " + path);
        }
    }
    if (col_user < 0 || col_item < 0 || col_rating < 0)
        throw std::runtime_error("CSV header must name user, item, rating: " + path);
    bool user_id_slot = user_cols.empty();
    bool item_id_slot = item_cols.empty();
    if (user_id_slot) {
        g.user_slots.push_back({});
        g.user_slots.back().name = "id";
    }
    if (item_id_slot) {
        g.item_slots.push_back({});
        g.item_slots.back().name = "id";
    }

    std::size_t line_no = 1;
    double seen_max = 0.0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            warn_malformed(path, line_no, "field count", stats);
            continue;
        }
        double r = 0;
        if (!parse_number(fields[col_rating], r))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-numeric rating '" +
                                     fields[col_rating] + "'");
        seen_max = std::max(seen_max, r);
        EntityId u;
        {
            const std::string& name = fields[col_user];
            auto it = g.user_index.find(name);
            if (it != g.user_index.end()) {
                u = it->second;
            } else {
                std::vector<std::uint32_t> attrs;
                for (auto [c, s] : user_cols) attrs.push_back(g.user_slots[s].intern(fields[c]));
                if (user_id_slot) attrs.push_back(g.user_slots.back().intern(name));
                u = g.add_user(name, std::move(attrs));
            }
        }
        EntityId i;
        {
            const std::string& name = fields[col_item];
            auto it = g.item_index.find(name);
            if (it != g.item_index.end()) {
                i = it->second;
            } else {
                std::vector<std::uint32_t> attrs;
                for (auto [c, s] : item_cols) attrs.push_back(g.item_slots[s].intern(fields[c]));
                if (item_id_slot) attrs.push_back(g.item_slots.back().intern(name));
                i = g.add_item(name, std::move(attrs));
            }
        }
        if (!g.set_rating(u, i, r) && stats) ++stats->duplicate_pairs;
    }
    g.r_max = std::max(5.0, std::ceil(seen_max));
    return g;
}

}  // namespace hire
