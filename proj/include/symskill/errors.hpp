#pragma once

#include <stdexcept>
#include <string>

namespace symskill {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define SYMSKILL_DEFINE_ERROR(Name)                     \
    struct Name : Error {                               \
        using Error::Error;                             \
    };

SYMSKILL_DEFINE_ERROR(ParseError)
SYMSKILL_DEFINE_ERROR(SchemaError)
SYMSKILL_DEFINE_ERROR(MonotonicityError)
SYMSKILL_DEFINE_ERROR(DuplicateTimestamp)
SYMSKILL_DEFINE_ERROR(IoError)
SYMSKILL_DEFINE_ERROR(MultiObjectMotion)
SYMSKILL_DEFINE_ERROR(NoCandidates)
SYMSKILL_DEFINE_ERROR(ExternalUnavailable)
SYMSKILL_DEFINE_ERROR(InvalidExternalReply)
SYMSKILL_DEFINE_ERROR(InsufficientData)
SYMSKILL_DEFINE_ERROR(DegenerateTrajectory)
SYMSKILL_DEFINE_ERROR(TypeMismatch)
SYMSKILL_DEFINE_ERROR(UnknownObject)
SYMSKILL_DEFINE_ERROR(ScriptInfeasible)
SYMSKILL_DEFINE_ERROR(UnknownSkill)
SYMSKILL_DEFINE_ERROR(SearchBudgetExceeded)
SYMSKILL_DEFINE_ERROR(InsideObstacle)

#undef SYMSKILL_DEFINE_ERROR

}  // namespace symskill
