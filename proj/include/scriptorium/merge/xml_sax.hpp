#pragma once

#include <expat.h>

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>

#include "scriptorium/core/error.hpp"

namespace scriptorium::xml {

using Attributes = std::unordered_map<std::string, std::string>;

/// Element name without its namespace prefix ("pc:TextLine" -> "TextLine").
inline std::string_view local_name(std::string_view qname) noexcept {
  const auto colon = qname.rfind(':');
  return colon == std::string_view::npos ? qname : qname.substr(colon + 1);
}

inline const std::string* find_attr(const Attributes& attrs, std::string_view key) {
  auto it = attrs.find(std::string(key));
  return it == attrs.end() ? nullptr : &it->second;
}

struct SaxHandler {
  std::function<void(std::string_view name, const Attributes& attrs, std::size_t line)> on_start;
  std::function<void(std::string_view name)> on_end;
};

namespace detail {
struct ParserDeleter {
  void operator()(XML_Parser p) const noexcept { XML_ParserFree(p); }
};

struct Context {
  SaxHandler* handler;
  XML_Parser parser;
  std::exception_ptr failure;
};

inline void XMLCALL start_cb(void* data, const XML_Char* name, const XML_Char** atts) {
  auto* ctx = static_cast<Context*>(data);
  if (ctx->failure || !ctx->handler->on_start) return;
  try {
    Attributes attrs;
    for (std::size_t i = 0; atts[i] != nullptr; i += 2) attrs.emplace(atts[i], atts[i + 1]);
    ctx->handler->on_start(local_name(name), attrs, XML_GetCurrentLineNumber(ctx->parser));
  } catch (...) {
    ctx->failure = std::current_exception();
    XML_StopParser(ctx->parser, XML_FALSE);
  }
}

inline void XMLCALL end_cb(void* data, const XML_Char* name) {
  auto* ctx = static_cast<Context*>(data);
  if (ctx->failure || !ctx->handler->on_end) return;
  try {
    ctx->handler->on_end(local_name(name));
  } catch (...) {
    ctx->failure = std::current_exception();
    XML_StopParser(ctx->parser, XML_FALSE);
  }
}
}  // namespace detail

/// Streams `document` through expat. Malformed XML raises ParseError carrying the
/// line expat stopped on; exceptions thrown from callbacks propagate unchanged.
inline void parse(std::string_view document, SaxHandler& handler) {
  std::unique_ptr<XML_ParserStruct, detail::ParserDeleter> parser(XML_ParserCreate(nullptr));
  if (!parser) throw Error("xml", "cannot allocate XML parser");
  detail::Context ctx{&handler, parser.get(), nullptr};
  XML_SetUserData(parser.get(), &ctx);
  XML_SetElementHandler(parser.get(), detail::start_cb, detail::end_cb);
  const auto status = XML_Parse(parser.get(), document.data(), static_cast<int>(document.size()), XML_TRUE);
  if (ctx.failure) std::rethrow_exception(ctx.failure);
  if (status != XML_STATUS_OK) {
    throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(parser.get())),
                     XML_GetCurrentLineNumber(parser.get()));
  }
}

}  // namespace scriptorium::xml
