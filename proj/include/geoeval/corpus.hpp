#pragma once

#include <expat.h>

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geoeval/detail/numbers.hpp"
#include "geoeval/error.hpp"
#include "geoeval/utf8.hpp"

namespace geoeval {

/// A point footprint in degrees.
struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;

    bool valid() const noexcept { return lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0; }
    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Element inside <toponym> or <place> that the schema does not define; carried through verbatim.
struct OpaqueElement {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::string inner_xml;

    friend bool operator==(const OpaqueElement&, const OpaqueElement&) = default;
};

/// A recognized or annotated toponym. `end` is inclusive; both indices count Unicode scalars.
struct ToponymSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string phrase;
    std::optional<GeoPoint> footprint;
    std::optional<std::string> place_name;
    std::optional<std::string> place_type;
    std::vector<OpaqueElement> place_extras;
    std::vector<OpaqueElement> extras;

    std::size_t length() const noexcept { return end - start + 1; }
    friend bool operator==(const ToponymSpan&, const ToponymSpan&) = default;
};

struct CorpusEntry {
    std::string entry_id;
    std::string text;
    std::vector<ToponymSpan> annotations;

    friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

enum class Genre { news, wikipedia, social_media, web_pages, other };

inline std::string_view to_string(Genre g) {
    switch (g) {
        case Genre::news: return "news";
        case Genre::wikipedia: return "wikipedia";
        case Genre::social_media: return "social_media";
        case Genre::web_pages: return "web_pages";
        case Genre::other: break;
    }
    return "other";
}

inline std::optional<Genre> parse_genre(std::string_view s) {
    for (Genre g : {Genre::news, Genre::wikipedia, Genre::social_media, Genre::web_pages, Genre::other})
        if (to_string(g) == s) return g;
    return std::nullopt;
}

struct Corpus {
    std::string id;
    std::string name;
    Genre genre = Genre::other;
    bool fully_annotated = true;
    std::vector<CorpusEntry> entries;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct CorpusStats {
    std::size_t entry_count = 0;
    double mean_words_per_entry = 0.0;
    double mean_toponyms_per_entry = 0.0;
};

namespace detail {

inline std::string describe_span(const ToponymSpan& s) {
    return "[" + std::to_string(s.start) + "," + std::to_string(s.end) + "] \"" + s.phrase + "\"";
}

// Chars that XML 1.0 can carry, literally or as a character reference.
inline bool is_xml_char(char32_t c) {
    return c == 0x9 || c == 0xA || c == 0xD || (c >= 0x20 && c <= 0xD7FF) || (c >= 0xE000 && c <= 0xFFFD) ||
           (c >= 0x10000 && c <= 0x10FFFF);
}

}  // namespace detail

/// Throws ValidationError unless `span` lies inside `text` and its phrase is the exact slice.
inline void validate_span(std::u32string_view text, const ToponymSpan& span, std::string_view entry_id) {
    auto where = [&] { return "entry '" + std::string(entry_id) + "': toponym " + detail::describe_span(span); };
    if (span.start > span.end || span.end >= text.size())
        throw ValidationError(where() + " lies outside the text (" + std::to_string(text.size()) + " characters)");
    auto slice = utf8::encode(text.substr(span.start, span.length()));
    if (slice != span.phrase) throw ValidationError(where() + " does not match text slice \"" + slice + "\"");
    if (span.footprint && !span.footprint->valid())
        throw ValidationError(where() + " has out-of-range footprint (" + detail::format_double(span.footprint->lon) +
                              " " + detail::format_double(span.footprint->lat) + ")");
}

/// Checks every Corpus invariant; throws ValidationError on the first violation.
inline void validate_corpus(const Corpus& corpus) {
    std::set<std::string_view> ids;
    for (const auto& entry : corpus.entries) {
        if (!ids.insert(entry.entry_id).second)
            throw ValidationError("duplicate entry id '" + entry.entry_id + "'");
        auto text = utf8::decode(entry.text);
        for (char32_t c : text)
            if (!detail::is_xml_char(c))
                throw ValidationError("entry '" + entry.entry_id + "': text contains a character XML cannot carry");
        for (const auto& span : entry.annotations) validate_span(text, span, entry.entry_id);
    }
}

namespace detail {

struct XmlElement {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::string text;
    std::string inner_xml;
    std::vector<XmlElement> children;
    long line = 0;
    long column = 0;

    const std::string* attribute(std::string_view key) const {
        for (const auto& [k, v] : attributes)
            if (k == key) return &v;
        return nullptr;
    }
};

/// Builds a small element tree from expat events, keeping the raw inner markup of every element.
class XmlTreeBuilder {
public:
    static XmlElement parse(std::string_view bytes) {
        XmlTreeBuilder builder(bytes);
        return builder.run();
    }

private:
    struct ParserDeleter {
        void operator()(XML_ParserStruct* p) const { XML_ParserFree(p); }
    };
    struct Frame {
        XmlElement element;
        XML_Index inner_begin = 0;
    };

    explicit XmlTreeBuilder(std::string_view bytes) : input_(bytes), parser_(XML_ParserCreate("UTF-8")) {
        if (!parser_) throw Error("cannot allocate XML parser");
        XML_SetUserData(parser_.get(), this);
        XML_SetElementHandler(parser_.get(), &on_start, &on_end);
        XML_SetCharacterDataHandler(parser_.get(), &on_text);
    }

    XmlElement run() {
        constexpr std::size_t chunk = std::size_t{1} << 30;
        std::size_t offset = 0;
        do {
            auto n = std::min(chunk, input_.size() - offset);
            bool last = offset + n == input_.size();
            if (XML_Parse(parser_.get(), input_.data() + offset, static_cast<int>(n), last) == XML_STATUS_ERROR)
                throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(parser_.get())),
                                 static_cast<long>(XML_GetCurrentLineNumber(parser_.get())),
                                 static_cast<long>(XML_GetCurrentColumnNumber(parser_.get())) + 1);
            offset += n;
        } while (offset < input_.size());
        if (!root_) throw ParseError("malformed XML: no root element", 1, 1);
        return std::move(*root_);
    }

    static void on_start(void* self_ptr, const XML_Char* name, const XML_Char** atts) {
        auto& self = *static_cast<XmlTreeBuilder*>(self_ptr);
        Frame frame;
        frame.element.name = name;
        for (std::size_t i = 0; atts[i] != nullptr; i += 2) frame.element.attributes.emplace_back(atts[i], atts[i + 1]);
        frame.element.line = static_cast<long>(XML_GetCurrentLineNumber(self.parser_.get()));
        frame.element.column = static_cast<long>(XML_GetCurrentColumnNumber(self.parser_.get())) + 1;
        frame.inner_begin = XML_GetCurrentByteIndex(self.parser_.get()) + XML_GetCurrentByteCount(self.parser_.get());
        self.stack_.push_back(std::move(frame));
    }

    static void on_end(void* self_ptr, const XML_Char*) {
        auto& self = *static_cast<XmlTreeBuilder*>(self_ptr);
        Frame frame = std::move(self.stack_.back());
        self.stack_.pop_back();
        auto inner_end = XML_GetCurrentByteIndex(self.parser_.get());
        if (inner_end > frame.inner_begin)
            frame.element.inner_xml = std::string(
                self.input_.substr(static_cast<std::size_t>(frame.inner_begin),
                                   static_cast<std::size_t>(inner_end - frame.inner_begin)));
        if (self.stack_.empty())
            self.root_ = std::move(frame.element);
        else
            self.stack_.back().element.children.push_back(std::move(frame.element));
    }

    static void on_text(void* self_ptr, const XML_Char* s, int len) {
        auto& self = *static_cast<XmlTreeBuilder*>(self_ptr);
        if (!self.stack_.empty()) self.stack_.back().element.text.append(s, static_cast<std::size_t>(len));
    }

    std::string_view input_;
    std::unique_ptr<XML_ParserStruct, ParserDeleter> parser_;
    std::vector<Frame> stack_;
    std::optional<XmlElement> root_;
};

inline std::string at_line(const XmlElement& e) { return " (line " + std::to_string(e.line) + ")"; }

// Returns the unique child named `name`, nullptr when absent.
inline const XmlElement* single_child(const XmlElement& parent, std::string_view name) {
    const XmlElement* found = nullptr;
    for (const auto& c : parent.children) {
        if (c.name != name) continue;
        if (found) throw ValidationError("duplicate <" + std::string(name) + "> in <" + parent.name + ">" + at_line(c));
        found = &c;
    }
    return found;
}

inline OpaqueElement to_opaque(const XmlElement& e) { return OpaqueElement{e.name, e.attributes, e.inner_xml}; }

inline std::size_t read_index(const XmlElement& toponym, std::string_view tag) {
    const auto* e = single_child(toponym, tag);
    if (!e) throw ValidationError("<toponym> is missing <" + std::string(tag) + ">" + at_line(toponym));
    auto v = parse_int<std::size_t>(e->text);
    if (!v) throw ValidationError("<" + std::string(tag) + "> is not a non-negative integer: \"" + e->text + "\"" + at_line(*e));
    return *v;
}

inline GeoPoint read_footprint(const XmlElement& e) {
    auto body = trim(e.text);
    auto sep = body.find_first_of(" \t\r\n");
    if (sep == std::string_view::npos)
        throw ValidationError("<footprint> must hold \"lon lat\": \"" + e.text + "\"" + at_line(e));
    auto lon = parse_double(body.substr(0, sep));
    auto lat = parse_double(body.substr(sep + 1));
    if (!lon || !lat) throw ValidationError("<footprint> must hold \"lon lat\": \"" + e.text + "\"" + at_line(e));
    return GeoPoint{*lon, *lat};
}

inline ToponymSpan read_toponym(const XmlElement& t) {
    ToponymSpan span;
    span.start = read_index(t, "start");
    span.end = read_index(t, "end");
    const auto* phrase = single_child(t, "phrase");
    if (!phrase) throw ValidationError("<toponym> is missing <phrase>" + at_line(t));
    span.phrase = phrase->text;
    for (const auto& c : t.children) {
        if (c.name == "start" || c.name == "end" || c.name == "phrase") continue;
        if (c.name != "place") {
            span.extras.push_back(to_opaque(c));
            continue;
        }
        if (&c != single_child(t, "place")) continue;
        for (const auto& p : c.children) {
            if (p.name == "footprint") {
                if (span.footprint) throw ValidationError("duplicate <footprint>" + at_line(p));
                span.footprint = read_footprint(p);
            } else if (p.name == "placename") {
                span.place_name = p.text;
            } else if (p.name == "placetype") {
                span.place_type = p.text;
            } else {
                span.place_extras.push_back(to_opaque(p));
            }
        }
    }
    return span;
}

}  // namespace detail

/// Parses the unified corpus XML (<entries>/<entry>/<text>/<toponyms>/<toponym>...).
/// `fully_annotated` is the ingestion default; a `fully_annotated` attribute on <entries> overrides it.
inline Corpus parse_unified_corpus(std::string_view xml, bool fully_annotated = true) {
    auto root = detail::XmlTreeBuilder::parse(xml);
    if (root.name != "entries") throw ValidationError("root element must be <entries>, found <" + root.name + ">");

    Corpus corpus;
    corpus.fully_annotated = fully_annotated;
    if (const auto* v = root.attribute("id")) corpus.id = *v;
    if (const auto* v = root.attribute("name")) corpus.name = *v;
    if (const auto* v = root.attribute("genre")) {
        auto g = parse_genre(*v);
        if (!g) throw ValidationError("unknown genre \"" + *v + "\"");
        corpus.genre = *g;
    }
    if (const auto* v = root.attribute("fully_annotated")) {
        if (*v != "true" && *v != "false") throw ValidationError("fully_annotated must be true or false");
        corpus.fully_annotated = *v == "true";
    }

    std::set<std::string> ids;
    for (const auto& e : root.children) {
        if (e.name != "entry") continue;
        CorpusEntry entry;
        const auto* id = e.attribute("id");
        entry.entry_id = id ? *id : std::to_string(corpus.entries.size() + 1);
        if (!ids.insert(entry.entry_id).second)
            throw ValidationError("duplicate entry id '" + entry.entry_id + "'" + detail::at_line(e));
        const auto* text = detail::single_child(e, "text");
        if (!text) throw ValidationError("entry '" + entry.entry_id + "' has no <text>" + detail::at_line(e));
        entry.text = text->text;
        auto scalars = utf8::decode(entry.text);
        if (const auto* toponyms = detail::single_child(e, "toponyms")) {
            for (const auto& t : toponyms->children) {
                if (t.name != "toponym") continue;
                auto span = detail::read_toponym(t);
                validate_span(scalars, span, entry.entry_id);
                entry.annotations.push_back(std::move(span));
            }
        }
        corpus.entries.push_back(std::move(entry));
    }
    return corpus;
}

namespace detail {

inline void escape_into(std::string& out, std::string_view s, bool attribute) {
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '\r': out += "&#13;"; break;
            case '"': attribute ? out += "&quot;" : out += c; break;
            case '\n': attribute ? out += "&#10;" : out += c; break;
            case '\t': attribute ? out += "&#9;" : out += c; break;
            default: out += c;
        }
    }
}

inline void write_element(std::string& out, int indent, std::string_view tag, std::string_view body) {
    out.append(static_cast<std::size_t>(indent), ' ');
    out += '<';
    out += tag;
    out += '>';
    escape_into(out, body, false);
    out += "</";
    out += tag;
    out += ">\n";
}

inline void write_opaque(std::string& out, int indent, const OpaqueElement& e) {
    out.append(static_cast<std::size_t>(indent), ' ');
    out += '<' + e.name;
    for (const auto& [k, v] : e.attributes) {
        out += ' ' + k + "=\"";
        escape_into(out, v, true);
        out += '"';
    }
    out += '>' + e.inner_xml + "</" + e.name + ">\n";
}

}  // namespace detail

/// Writes the unified corpus XML. Optional fields that are absent are omitted.
inline std::string serialize_corpus(const Corpus& corpus) {
    std::string out = "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<entries";
    auto attr = [&out](std::string_view k, std::string_view v) {
        out += ' ';
        out += k;
        out += "=\"";
        detail::escape_into(out, v, true);
        out += '"';
    };
    if (!corpus.id.empty()) attr("id", corpus.id);
    if (!corpus.name.empty()) attr("name", corpus.name);
    if (corpus.genre != Genre::other) attr("genre", to_string(corpus.genre));
    if (!corpus.fully_annotated) attr("fully_annotated", "false");
    out += ">\n";

    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& entry = corpus.entries[i];
        out += "  <entry";
        if (entry.entry_id != std::to_string(i + 1)) attr("id", entry.entry_id);
        out += ">\n";
        detail::write_element(out, 4, "text", entry.text);
        if (entry.annotations.empty()) {
            out += "    <toponyms/>\n";
        } else {
            out += "    <toponyms>\n";
            for (const auto& span : entry.annotations) {
                out += "      <toponym>\n";
                detail::write_element(out, 8, "start", std::to_string(span.start));
                detail::write_element(out, 8, "end", std::to_string(span.end));
                detail::write_element(out, 8, "phrase", span.phrase);
                if (span.footprint || span.place_name || span.place_type || !span.place_extras.empty()) {
                    out += "        <place>\n";
                    if (span.footprint)
                        detail::write_element(out, 10, "footprint",
                                              detail::format_double(span.footprint->lon) + " " +
                                                  detail::format_double(span.footprint->lat));
                    if (span.place_name) detail::write_element(out, 10, "placename", *span.place_name);
                    if (span.place_type) detail::write_element(out, 10, "placetype", *span.place_type);
                    for (const auto& x : span.place_extras) detail::write_opaque(out, 10, x);
                    out += "        </place>\n";
                }
                for (const auto& x : span.extras) detail::write_opaque(out, 8, x);
                out += "      </toponym>\n";
            }
            out += "    </toponyms>\n";
        }
        out += "  </entry>\n";
    }
    out += "</entries>\n";
    return out;
}

/// Entry count plus mean words (maximal non-whitespace runs) and toponyms per entry, rounded to 0.1.
inline CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.entry_count = corpus.entries.size();
    if (corpus.entries.empty()) return stats;
    std::size_t words = 0;
    std::size_t toponyms = 0;
    for (const auto& entry : corpus.entries) {
        bool in_word = false;
        for (char c : entry.text) {
            bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
            if (!ws && !in_word) ++words;
            in_word = !ws;
        }
        toponyms += entry.annotations.size();
    }
    auto n = static_cast<double>(stats.entry_count);
    auto round1 = [](double x) { return std::round(x * 10.0) / 10.0; };
    stats.mean_words_per_entry = round1(static_cast<double>(words) / n);
    stats.mean_toponyms_per_entry = round1(static_cast<double>(toponyms) / n);
    return stats;
}

}  // namespace geoeval
