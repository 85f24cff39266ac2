#pragma once

#include <stdexcept>
#include <string>

namespace fivegang {

/// Base for every error raised by the library. Each concrete error type
/// corresponds to one failure mode of one operation, so callers can catch
/// precisely what they expect and let the rest propagate.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

#define FIVEGANG_DEFINE_ERROR(Name)                                                                \
    class Name : public Error                                                                      \
    {                                                                                              \
    public:                                                                                        \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}                       \
    }

// sim-core
FIVEGANG_DEFINE_ERROR(SchedulingInPast);
FIVEGANG_DEFINE_ERROR(LinkDown);
FIVEGANG_DEFINE_ERROR(InvalidProfile);

// codec-rlnc
FIVEGANG_DEFINE_ERROR(DivisionByZero);
FIVEGANG_DEFINE_ERROR(EmptyGeneration);
FIVEGANG_DEFINE_ERROR(MixedGenerations);
FIVEGANG_DEFINE_ERROR(EmptyBuffer);
FIVEGANG_DEFINE_ERROR(GenerationMismatch);

// codec-cs
FIVEGANG_DEFINE_ERROR(DimensionMismatch);
FIVEGANG_DEFINE_ERROR(IllConditionedSupport);

// codec-dsc
FIVEGANG_DEFINE_ERROR(LengthMismatch);

// wire formats
FIVEGANG_DEFINE_ERROR(MalformedPacket);

// sensor-node
FIVEGANG_DEFINE_ERROR(BatteryDepleted);
FIVEGANG_DEFINE_ERROR(DegenerateReference);
FIVEGANG_DEFINE_ERROR(ZeroDuty);

// aggregation-point
FIVEGANG_DEFINE_ERROR(UnknownPort);
FIVEGANG_DEFINE_ERROR(UnknownInterface);
FIVEGANG_DEFINE_ERROR(FlowUnbound);
FIVEGANG_DEFINE_ERROR(IllegalTransition);
FIVEGANG_DEFINE_ERROR(EstablishFailure);

// edge-gateway
FIVEGANG_DEFINE_ERROR(UnknownAdapter);
FIVEGANG_DEFINE_ERROR(NoProviders);

// cloud
FIVEGANG_DEFINE_ERROR(MalformedTopic);
FIVEGANG_DEFINE_ERROR(ConfigMismatch);
FIVEGANG_DEFINE_ERROR(InsufficientTraining);
FIVEGANG_DEFINE_ERROR(ShapeMismatch);

// cli
FIVEGANG_DEFINE_ERROR(BadParameterPath);
FIVEGANG_DEFINE_ERROR(IoFailure);

#undef FIVEGANG_DEFINE_ERROR

/// Scenario validation failure. `path` is the JSON pointer of the offending
/// value, empty when the document itself is unreadable.
class ScenarioError : public Error
{
public:
    ScenarioError(const std::string& kind, std::string path, std::string message)
        : Error(kind + ": " + (path.empty() ? "/" : path) + ": " + message), kind_(kind), path_(std::move(path)),
          message_(std::move(message))
    {
    }

    const std::string& kind() const { return kind_; }
    const std::string& path() const { return path_; }
    const std::string& message() const { return message_; }

private:
    std::string kind_;
    std::string path_;
    std::string message_;
};

#define FIVEGANG_DEFINE_SCENARIO_ERROR(Name)                                                       \
    class Name : public ScenarioError                                                              \
    {                                                                                              \
    public:                                                                                        \
        Name(std::string path, std::string message)                                                \
            : ScenarioError(#Name, std::move(path), std::move(message))                            \
        {                                                                                          \
        }                                                                                          \
    }

FIVEGANG_DEFINE_SCENARIO_ERROR(ParseError);
FIVEGANG_DEFINE_SCENARIO_ERROR(DanglingReference);
FIVEGANG_DEFINE_SCENARIO_ERROR(InvalidRange);

#undef FIVEGANG_DEFINE_SCENARIO_ERROR

} // namespace fivegang
