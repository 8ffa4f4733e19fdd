#include "autoresearch/lenient_json.hpp"
#include "autoresearch/error.hpp"

#include <cctype>
#include <string>

namespace autoresearch::protocol {

using nlohmann::json;

namespace {

constexpr int kMaxDepth = 64;

class Parser {
public:
    explicit Parser(std::string_view s) : s_(s) {}

    json parse_object_at(std::size_t start) {
        pos_ = start;
        auto v = object(0);
        return v;
    }

private:
    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorCode::MalformedInput, what + " at offset " + std::to_string(pos_));
    }

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }

    void ws() {
        while (!eof()) {
            const char c = s_[pos_];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else if (c == '/' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '/') {
                while (!eof() && s_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    json value(int depth) {
        if (depth > kMaxDepth) error("nesting too deep");
        ws();
        if (eof()) error("unexpected end of input");
        const char c = peek();
        if (c == '{') return object(depth + 1);
        if (c == '[') return array(depth + 1);
        if (c == '"' || c == '\'') return string();
        if (c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const auto word = identifier();
            if (word == "true" || word == "True") return true;
            if (word == "false" || word == "False") return false;
            if (word == "null" || word == "None") return nullptr;
            error("unexpected bare word '" + word + "'");
        }
        error(std::string("unexpected character '") + c + "'");
    }

    json object(int depth) {
        if (depth > kMaxDepth) error("nesting too deep");
        ws();
        if (peek() != '{') error("expected '{'");
        ++pos_;
        json out = json::object();
        while (true) {
            ws();
            if (eof()) error("unterminated object");
            if (peek() == '}') {
                ++pos_;
                return out;
            }
            std::string key;
            if (peek() == '"' || peek() == '\'') key = string();
            else if (std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_') key = identifier();
            else error("expected a key");
            ws();
            if (peek() != ':') error("expected ':' after key '" + key + "'");
            ++pos_;
            out[key] = value(depth);
            ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() == '}') continue;
            error("expected ',' or '}'");
        }
    }

    json array(int depth) {
        ++pos_;
        json out = json::array();
        while (true) {
            ws();
            if (eof()) error("unterminated array");
            if (peek() == ']') {
                ++pos_;
                return out;
            }
            out.push_back(value(depth));
            ws();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() == ']') continue;
            error("expected ',' or ']'");
        }
    }

    std::string identifier() {
        const auto start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

    static void put_utf8(std::string& out, unsigned cp) {
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }

    unsigned hex4() {
        if (pos_ + 4 > s_.size()) error("short \\u escape");
        unsigned v = 0;
        for (int i = 0; i < 4; ++i) {
            const char h = s_[pos_++];
            v <<= 4;
            if (h >= '0' && h <= '9') v |= static_cast<unsigned>(h - '0');
            else if (h >= 'a' && h <= 'f') v |= static_cast<unsigned>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') v |= static_cast<unsigned>(h - 'A' + 10);
            else error("bad \\u escape");
        }
        return v;
    }

    std::string string() {
        const char quote = s_[pos_++];
        std::string out;
        while (true) {
            if (eof()) error("unterminated string");
            const char c = s_[pos_++];
            if (c == quote) return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (eof()) error("unterminated string");
            const char e = s_[pos_++];
            switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            case 'b': out += '\b'; break;
            case 'f': out += '\f'; break;
            case 'u': {
                unsigned cp = hex4();
                if (cp >= 0xD800 && cp <= 0xDBFF && pos_ + 1 < s_.size() && s_[pos_] == '\\' && s_[pos_ + 1] == 'u') {
                    pos_ += 2;
                    const unsigned lo = hex4();
                    if (lo >= 0xDC00 && lo <= 0xDFFF) cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                }
                if (cp >= 0xD800 && cp <= 0xDFFF) cp = 0xFFFD;
                put_utf8(out, cp);
                break;
            }
            default: out += e; break; // \" \' \\ \/ and stray escapes like \_
            }
        }
    }

    json number() {
        const auto start = pos_;
        if (peek() == '+' || peek() == '-') ++pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '.' || peek() == '+' ||
                          peek() == '-'))
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        if (!tok.empty() && tok.front() == '+') tok.erase(tok.begin());
        auto parsed = json::parse(tok, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_number()) {
            // ".5" and "5." are not JSON but are obvious numbers.
            try {
                std::size_t used = 0;
                const double d = std::stod(tok, &used);
                if (used == tok.size()) return d;
            } catch (const std::exception&) {
            }
            pos_ = start;
            error("bad number '" + tok + "'");
        }
        return parsed;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace

json parse_lenient_object(std::string_view text) {
    const auto brace = text.find('{');
    if (brace == std::string_view::npos) fail(ErrorCode::MalformedInput, "no '{' found in action input");
    Parser p(text);
    return p.parse_object_at(brace);
}

} // namespace autoresearch::protocol
