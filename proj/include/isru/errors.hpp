#pragma once

#include <stdexcept>
#include <string>

namespace isru {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// geometry / kinematics
class DimensionMismatch : public Error { public: using Error::Error; };
class NoConvergence : public Error { public: using Error::Error; };
class JointLimitViolation : public Error { public: using Error::Error; };

// impedance sim
class NotHolding : public Error { public: using Error::Error; };

// link codec
class MalformedFrame : public Error { public: using Error::Error; };
class VersionMismatch : public Error { public: using Error::Error; };
class ChecksumMismatch : public Error { public: using Error::Error; };

// haptic control
class AlreadyEngaged : public Error { public: using Error::Error; };
class NotEngaged : public Error { public: using Error::Error; };

// planning / mission
class GoalUnreachable : public Error { public: using Error::Error; };
class NoPathFound : public Error { public: using Error::Error; };
class StartInCollision : public Error { public: using Error::Error; };
class IllegalTransition : public Error { public: using Error::Error; };
class LinkTimeout : public Error { public: using Error::Error; };
class ExecRejected : public Error { public: using Error::Error; };

// station
class BadConfig : public Error { public: using Error::Error; };
class EndpointBusy : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

}  // namespace isru
