#pragma once

// Reader for the plain-text run configuration: a subset of TOML with
// [section] and [a.b] headers, `key = value` lines, # comments, basic and
// literal strings, booleans, integers, floats and single-line arrays.
// The result is a JSON object so that validation and serialization share
// one representation.

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "hmfg/core.hpp"

namespace hmfg::config {

using json = nlohmann::json;

class ConfigError : public DomainError {
public:
    explicit ConfigError(const std::string& what) : DomainError(what) {}
};

namespace detail {

class LineParser {
public:
    LineParser(const std::string& s, int line) : s_(s), line_(line) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool at_end_or_comment() {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    bool consume(char c) {
        skip_ws();
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string bare_key() {
        skip_ws();
        if (peek() == '"') return basic_string();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
            ++pos_;
        if (pos_ == start) fail("expected a key");
        return s_.substr(start, pos_ - start);
    }

    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{bare_key()};
        while (consume('.')) parts.push_back(bare_key());
        return parts;
    }

    json value() {
        skip_ws();
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            return true;
        }
        if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            return false;
        }
        return number();
    }

private:
    std::string basic_string() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char ch = s_[pos_++];
            if (ch == '\\') {
                if (pos_ >= s_.size()) fail("unterminated escape");
                const char e = s_[pos_++];
                switch (e) {
                    case 'n': ch = '\n'; break;
                    case 't': ch = '\t'; break;
                    case '"': ch = '"'; break;
                    case '\\': ch = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out.push_back(ch);
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    std::string literal_string() {
        ++pos_;
        const std::size_t end = s_.find('\'', pos_);
        if (end == std::string::npos) fail("unterminated string");
        std::string out = s_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return out;
    }

    json array() {
        ++pos_;
        json arr = json::array();
        for (;;) {
            if (consume(']')) return arr;
            arr.push_back(value());
            if (consume(',')) continue;
            if (consume(']')) return arr;
            fail("expected ',' or ']' in array");
        }
    }

    json number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                    s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '_'))
            ++pos_;
        std::string tok = s_.substr(start, pos_ - start);
        std::erase(tok, '_');
        if (tok.empty()) fail("expected a value");
        const bool is_float = tok.find_first_of(".eE") != std::string::npos;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double v = std::stod(tok, &used);
                if (used == tok.size()) return v;
            } else {
                const long long v = std::stoll(tok, &used, 10);
                if (used == tok.size()) return v;
            }
        } catch (const std::exception&) {
        }
        fail("invalid value '" + tok + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_;
};

}  // namespace detail

/// Parse configuration text into a JSON object.
inline json parse(const std::string& text) {
    json root = json::object();
    json* table = &root;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        detail::LineParser p(line, lineno);
        if (p.at_end_or_comment()) continue;
        if (p.consume('[')) {
            const auto path = p.dotted_key();
            if (!p.consume(']')) p.fail("expected ']' after section name");
            if (!p.at_end_or_comment()) p.fail("unexpected text after section header");
            table = &root;
            for (const auto& part : path) {
                json& next = (*table)[part];
                if (next.is_null()) next = json::object();
                if (!next.is_object()) p.fail("section '" + part + "' clashes with a value");
                table = &next;
            }
            continue;
        }
        const auto key = p.dotted_key();
        if (!p.consume('=')) p.fail("expected '=' after key");
        json v = p.value();
        if (!p.at_end_or_comment()) p.fail("unexpected text after value");
        json* t = table;
        for (std::size_t k = 0; k + 1 < key.size(); ++k) {
            json& next = (*t)[key[k]];
            if (next.is_null()) next = json::object();
            if (!next.is_object()) p.fail("key '" + key[k] + "' is not a table");
            t = &next;
        }
        if (t->contains(key.back())) p.fail("duplicate key '" + key.back() + "'");
        (*t)[key.back()] = std::move(v);
    }
    return root;
}

inline json parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

}  // namespace hmfg::config
