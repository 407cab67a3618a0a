#pragma once

#include <string>

#include "chord/types.hpp"

namespace chord {

enum class ScheduleKind { constant, binary, periodic, decay };
enum class DecayShape { linear, cosine };

// Declarative mu-versus-step curve. Spec-string grammar (also the format
// emitted by format_schedule):
//   constant:VALUE
//   binary:SWITCH_STEP:HIGH:LOW
//   periodic:PERIOD:DUTY_FRACTION:HIGH:LOW
//   decay:START:END:DECAY_STEPS:{linear|cosine}
struct MuSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double value = 0.0;                     // constant
  long switch_step = 0;                   // binary
  double high = 1.0, low = 0.0;           // binary + periodic
  long period = 1;                        // periodic
  double duty = 0.5;                      // periodic, fraction of period at high
  double start = 0.0, end = 0.0;          // decay
  long decay_steps = 1;                   // decay
  DecayShape shape = DecayShape::linear;  // decay

  void validate() const;   // every emitted value must lie in [0, 1]
  double max_value() const;
};

double mu_at(const MuSchedule& schedule, long step);

MuSchedule parse_schedule(const std::string& spec);  // ConfigError names the bad position
std::string format_schedule(const MuSchedule& schedule);

}  // namespace chord
