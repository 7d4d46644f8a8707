#pragma once

#include <stdexcept>
#include <string>

namespace bsdesign {

// Base of every error raised by the library. name() is the stable identifier
// printed by the CLI on its diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define BSDESIGN_DEFINE_ERROR(Type)                                  \
  class Type : public Error {                                        \
   public:                                                           \
    explicit Type(const std::string& what) : Error(#Type, what) {}  \
  };

BSDESIGN_DEFINE_ERROR(InvalidArgument)
BSDESIGN_DEFINE_ERROR(RankDeficient)
BSDESIGN_DEFINE_ERROR(NoFeasibleGamma)
BSDESIGN_DEFINE_ERROR(BoundarySingularity)
BSDESIGN_DEFINE_ERROR(ZeroProportion)
BSDESIGN_DEFINE_ERROR(GridTooLarge)
BSDESIGN_DEFINE_ERROR(DegeneratePrior)
BSDESIGN_DEFINE_ERROR(ParseError)

#undef BSDESIGN_DEFINE_ERROR

}  // namespace bsdesign
