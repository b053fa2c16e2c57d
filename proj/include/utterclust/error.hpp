#ifndef UTTERCLUST_ERROR_HPP
#define UTTERCLUST_ERROR_HPP

#include <stdexcept>
#include <string>

namespace utterclust {

enum class error_kind { usage, data, transport, protocol, io };

inline const char* to_string(error_kind kind) {
  switch (kind) {
    case error_kind::usage: return "usage";
    case error_kind::data: return "data";
    case error_kind::transport: return "transport";
    case error_kind::protocol: return "protocol";
    case error_kind::io: return "io";
  }
  return "unknown";
}

// Base of every exception thrown by the library.
class error : public std::runtime_error {
public:
  error(error_kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  error_kind kind() const noexcept { return kind_; }

private:
  error_kind kind_;
};

struct usage_error : error {
  explicit usage_error(const std::string& what) : error(error_kind::usage, what) {}
};

struct data_error : error {
  explicit data_error(const std::string& what) : error(error_kind::data, what) {}
};

struct transport_error : error {
  explicit transport_error(const std::string& what) : error(error_kind::transport, what) {}
};

struct protocol_error : error {
  explicit protocol_error(const std::string& what) : error(error_kind::protocol, what) {}
};

struct io_error : error {
  explicit io_error(const std::string& what) : error(error_kind::io, what) {}
};

}  // namespace utterclust

#endif  // UTTERCLUST_ERROR_HPP
