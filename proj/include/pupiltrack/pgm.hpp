#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pupiltrack/image.hpp"

namespace pupiltrack {

/// Error raised by PGM I/O, with a kind discriminating the failure mode.
class PgmError : public std::runtime_error {
 public:
  enum class Kind {
    open_failed,   // file missing or unreadable
    bad_magic,     // first token is not "P5"
    bad_header,    // malformed width/height/maxval
    bad_maxval,    // maxval outside [1, 255]
    truncated,     // pixel payload shorter than width*height
    write_failed,  // destination not writable or write error
  };

  PgmError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

// Reads the next header token, skipping whitespace and '#' comment lines.
inline std::string next_pgm_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

inline int parse_pgm_int(const std::string& token, const char* field) {
  if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
    throw PgmError(PgmError::Kind::bad_header,
                   std::string("PGM header: invalid ") + field + " '" + token + "'");
  }
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw PgmError(PgmError::Kind::bad_header,
                   std::string("PGM header: ") + field + " out of range");
  }
}

}  // namespace detail

/// Loads a binary (P5) PGM file with maxval <= 255.
inline GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PgmError(PgmError::Kind::open_failed,
                   "cannot open PGM file: " + path.string());
  }

  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') {
    throw PgmError(PgmError::Kind::bad_magic,
                   "not a binary PGM (P5) file: " + path.string());
  }

  const int width = detail::parse_pgm_int(detail::next_pgm_token(in), "width");
  const int height = detail::parse_pgm_int(detail::next_pgm_token(in), "height");
  const int maxval = detail::parse_pgm_int(detail::next_pgm_token(in), "maxval");
  if (width < 1 || height < 1) {
    throw PgmError(PgmError::Kind::bad_header,
                   "PGM header: bad dimensions in " + path.string());
  }
  if (maxval < 1 || maxval > 255) {
    throw PgmError(PgmError::Kind::bad_maxval,
                   "PGM maxval " + std::to_string(maxval) +
                       " unsupported (must be <= 255): " + path.string());
  }
  // The header ends with exactly one whitespace byte before the payload;
  // next_pgm_token consumed it as the maxval delimiter.

  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw PgmError(PgmError::Kind::truncated,
                   "PGM pixel payload truncated: " + path.string());
  }
  return GrayImage(width, height, std::move(data));
}

/// Writes img as binary P5 with maxval 255. Byte-exact inverse of load_pgm.
inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw PgmError(PgmError::Kind::write_failed,
                   "cannot open PGM file for writing: " + path.string());
  }
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels().data()),
            static_cast<std::streamsize>(img.pixel_count()));
  if (!out) {
    throw PgmError(PgmError::Kind::write_failed,
                   "PGM write failed: " + path.string());
  }
}

/// Standard frame file name within a sequence directory: frame_0000.pgm, ...
inline std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.pgm", index);
  return buf;
}

}  // namespace pupiltrack
