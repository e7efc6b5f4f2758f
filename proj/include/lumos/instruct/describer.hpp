#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

#include "lumos/codec/image.hpp"
#include "lumos/instruct/instruction.hpp"

namespace lumos::instruct {

/// The instruction-generation prompt sent to an external vision-language model.
extern const char* const kVlmPrompt;

class DescriberError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DescriberConnectionError : public DescriberError {
 public:
  using DescriberError::DescriberError;
};
class DescriberTimeoutError : public DescriberError {
 public:
  using DescriberError::DescriberError;
};
class DescriberReplyError : public DescriberError {
 public:
  using DescriberError::DescriberError;
};

/// Produces an instruction from an image. `previous` is the instruction of the
/// preceding pass, if any.
class Describer {
 public:
  virtual ~Describer() = default;
  virtual Instruction describe(const Image& image, const Instruction* previous) = 0;
  virtual std::string name() const = 0;
};

/// Image statistics stand-in: mean luma picks the intensity word, the luma
/// imbalance between opposite thirds picks the light position. Other scene
/// fields are carried over from the previous instruction's scene when present.
class HeuristicDescriber : public Describer {
 public:
  explicit HeuristicDescriber(FacetMask mask = {}) : mask_(mask) {}
  Instruction describe(const Image& image, const Instruction* previous) override;
  std::string name() const override { return "heuristic"; }

  /// Mean-luma boundaries: >= bright_min is bright, >= moderate_min moderate.
  double bright_min = 0.435;
  double moderate_min = 0.275;
  /// Smallest luma imbalance that counts as directional light.
  double direction_min = 0.04;

 private:
  FacetMask mask_;
};

struct ExternalDescriberConfig {
  std::string url;          // e.g. http://host:port/describe
  std::string auth_header;  // sent verbatim as Authorization when non-empty
  std::chrono::milliseconds timeout{30000};
};

/// POSTs {prompt, image_b64} as JSON and expects {text} back.
class ExternalDescriber : public Describer {
 public:
  explicit ExternalDescriber(ExternalDescriberConfig config);
  Instruction describe(const Image& image, const Instruction* previous) override;
  std::string name() const override { return "external"; }

 private:
  ExternalDescriberConfig config_;
  std::string origin_, path_;
};

}  // namespace lumos::instruct
