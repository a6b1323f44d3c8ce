#pragma once

#include <stdexcept>
#include <string>

namespace lgcp {

// Exit codes surfaced by the command line tool.
enum class ExitCode : int { Ok = 0, Config = 2, Data = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::Numerical)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("invalid geometry: " + what, ExitCode::Data) {}
};

// A point (or sampler) that the mesh does not cover. `index` is the offending
// point index, or -1 when not applicable.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, long index = -1)
      : Error("coverage: " + what, ExitCode::Data), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

class OutOfExtentError : public Error {
 public:
  OutOfExtentError(const std::string& what, long index)
      : Error("out of raster extent: " + what, ExitCode::Data), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

class MeshError : public Error {
 public:
  explicit MeshError(const std::string& what) : Error("mesh refinement failed: " + what, ExitCode::Numerical) {}
};

class MeshTimeout : public MeshError {
 public:
  MeshTimeout() : MeshError("deadline exceeded") {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error("numerical failure: " + what, ExitCode::Numerical) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config: " + what, ExitCode::Config) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data: " + what, ExitCode::Data) {}
};

}  // namespace lgcp
