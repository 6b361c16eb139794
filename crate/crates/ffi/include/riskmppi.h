#ifndef RISKMPPI_H
#define RISKMPPI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a call. Values other than `RISKMPPI_STATUS_OK` mirror the
// library's error kinds plus two boundary-specific cases.
typedef enum RiskmppiStatus {
  RISKMPPI_STATUS_OK = 0,
  RISKMPPI_STATUS_INVALID_ARGUMENT = 1,
  RISKMPPI_STATUS_DOMAIN = 2,
  RISKMPPI_STATUS_INTERNAL = 3,
  RISKMPPI_STATUS_INSUFFICIENT_DATA = 4,
  RISKMPPI_STATUS_PARSE = 5,
  RISKMPPI_STATUS_VALIDATION = 6,
  RISKMPPI_STATUS_CONFIG = 7,
  RISKMPPI_STATUS_IO = 8,
  RISKMPPI_STATUS_CSV = 9,
  // A required pointer argument was null or a string was not UTF-8.
  RISKMPPI_STATUS_NULL_POINTER = 10,
  RISKMPPI_STATUS_PANIC = 11,
} RiskmppiStatus;

typedef struct RiskmppiCourse RiskmppiCourse;

typedef struct RiskmppiPlanner RiskmppiPlanner;

typedef struct RiskmppiRiskModel RiskmppiRiskModel;

typedef struct RiskmppiTrajectory RiskmppiTrajectory;

typedef struct RiskmppiVec3 {
  double x;
  double y;
  double z;
} RiskmppiVec3;

// Position, velocity and acceleration at the start of a plan.
typedef struct RiskmppiBoundaryState {
  struct RiskmppiVec3 position;
  struct RiskmppiVec3 velocity;
  struct RiskmppiVec3 acceleration;
} RiskmppiBoundaryState;

// Optimiser settings and cost weights.
typedef struct RiskmppiPlannerConfig {
  size_t n_samples;
  size_t n_iter;
  // Perturbation standard deviation in x and y (m).
  double sigma;
  double beta;
  uint64_t seed;
  // Duration of each trajectory segment (s).
  double segment_duration;
  double w_g;
  double w_obs;
  double w_rho;
  double w_ct;
} RiskmppiPlannerConfig;

// Output of a solve.
typedef struct RiskmppiSolution {
  struct RiskmppiVec3 r1;
  struct RiskmppiVec3 r2;
  double cost;
  // Wall-clock solve time (s).
  double elapsed;
} RiskmppiSolution;

typedef struct RiskmppiKinematicState {
  struct RiskmppiVec3 position;
  struct RiskmppiVec3 velocity;
  struct RiskmppiVec3 acceleration;
  struct RiskmppiVec3 jerk;
} RiskmppiKinematicState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
//
// The pointer stays valid until the next failing call on the same thread.
const char *riskmppi_last_error(void);

// Library version as a static nul-terminated string.
const char *riskmppi_version(void);

// Parses a course from the text of a course file.
enum RiskmppiStatus riskmppi_course_load(const char *text, struct RiskmppiCourse **course);

void riskmppi_course_free(struct RiskmppiCourse *course);

// Number of goals of a course, 0 for a null course.
size_t riskmppi_course_goal_count(const struct RiskmppiCourse *course);

enum RiskmppiStatus riskmppi_course_goal(const struct RiskmppiCourse *course,
                                         size_t index,
                                         struct RiskmppiVec3 *goal);

enum RiskmppiStatus riskmppi_course_start(const struct RiskmppiCourse *course,
                                          struct RiskmppiBoundaryState *start);

// Distance to the nearest obstacle surface, negative inside an obstacle and
// infinite on a course without obstacles.
enum RiskmppiStatus riskmppi_course_clearance(const struct RiskmppiCourse *course,
                                              struct RiskmppiVec3 point,
                                              double *clearance);

enum RiskmppiStatus riskmppi_risk_model_new(double a,
                                            double b,
                                            double q,
                                            struct RiskmppiRiskModel **model);

// Fits the quantile line `d_h = a + b v_max` to `n` samples.
enum RiskmppiStatus riskmppi_risk_model_fit(const double *v_max,
                                            const double *d_h,
                                            size_t n,
                                            double q,
                                            struct RiskmppiRiskModel **model);

enum RiskmppiStatus riskmppi_risk_model_params(const struct RiskmppiRiskModel *model,
                                               double *a,
                                               double *b,
                                               double *q);

void riskmppi_risk_model_free(struct RiskmppiRiskModel *model);

// Risk of a plan with predicted deviation `d_hat` and clearance `d_obs`.
double riskmppi_risk_measure(double d_hat, double d_obs);

// Hausdorff distance between two point sets of `na` and `nb` points.
enum RiskmppiStatus riskmppi_hausdorff(const struct RiskmppiVec3 *a,
                                       size_t na,
                                       const struct RiskmppiVec3 *b,
                                       size_t nb,
                                       double *distance);

// Default optimiser settings and weights.
struct RiskmppiPlannerConfig riskmppi_planner_config_default(void);

// Creates a planner. `model` may be null to plan without the risk term; it
// is copied, so the caller keeps ownership.
enum RiskmppiStatus riskmppi_planner_new(const struct RiskmppiPlannerConfig *config,
                                         const struct RiskmppiRiskModel *model,
                                         struct RiskmppiPlanner **planner);

void riskmppi_planner_free(struct RiskmppiPlanner *planner);

// Optimises the two waypoints from `start` towards `goal`.
//
// `warm_r1` and `warm_r2` give the initial waypoints; pass null for both to
// start from the straight line towards the goal. If `trajectory` is not
// null it receives a new trajectory handle for the solution.
enum RiskmppiStatus riskmppi_planner_solve(const struct RiskmppiPlanner *planner,
                                           const struct RiskmppiCourse *course,
                                           const struct RiskmppiBoundaryState *start,
                                           struct RiskmppiVec3 goal,
                                           const struct RiskmppiVec3 *warm_r1,
                                           const struct RiskmppiVec3 *warm_r2,
                                           struct RiskmppiSolution *solution,
                                           struct RiskmppiTrajectory **trajectory);

// Builds the trajectory through two waypoints without optimising.
enum RiskmppiStatus riskmppi_planner_trajectory(const struct RiskmppiPlanner *planner,
                                                const struct RiskmppiBoundaryState *start,
                                                struct RiskmppiVec3 r1,
                                                struct RiskmppiVec3 r2,
                                                struct RiskmppiTrajectory **trajectory);

// Total duration of both segments (s), NaN for a null trajectory.
double riskmppi_trajectory_horizon(const struct RiskmppiTrajectory *trajectory);

// State at time `t`, which must lie in `[0, horizon]`.
enum RiskmppiStatus riskmppi_trajectory_eval(const struct RiskmppiTrajectory *trajectory,
                                             double t,
                                             struct RiskmppiKinematicState *state);

void riskmppi_trajectory_free(struct RiskmppiTrajectory *trajectory);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKMPPI_H */
