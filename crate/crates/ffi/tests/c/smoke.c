#include <math.h>
#include <stdio.h>
#include <string.h>

#include "riskmppi.h"

#define CHECK(call)                                                              \
    do {                                                                         \
        RiskmppiStatus s_ = (call);                                              \
        if (s_ != RISKMPPI_STATUS_OK) {                                          \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,              \
                    riskmppi_last_error());                                      \
            return 1;                                                            \
        }                                                                        \
    } while (0)

int main(void) {
    const char *text = "start 0 0 1 0 0 0\ncylinder 2 0.3 0.4\ngoal 4 0 1\n";
    RiskmppiCourse *course = NULL;
    CHECK(riskmppi_course_load(text, &course));

    RiskmppiRiskModel *model = NULL;
    CHECK(riskmppi_risk_model_new(0.05, 0.1, 0.95, &model));

    RiskmppiPlannerConfig cfg = riskmppi_planner_config_default();
    cfg.n_iter = 40;
    cfg.seed = 3;
    RiskmppiPlanner *planner = NULL;
    CHECK(riskmppi_planner_new(&cfg, model, &planner));

    RiskmppiBoundaryState start;
    CHECK(riskmppi_course_start(course, &start));
    RiskmppiVec3 goal;
    CHECK(riskmppi_course_goal(course, 0, &goal));

    RiskmppiSolution sol;
    RiskmppiTrajectory *traj = NULL;
    CHECK(riskmppi_planner_solve(planner, course, &start, goal, NULL, NULL, &sol, &traj));

    RiskmppiKinematicState end;
    CHECK(riskmppi_trajectory_eval(traj, riskmppi_trajectory_horizon(traj), &end));
    if (fabs(end.position.x - sol.r2.x) > 1e-9 || fabs(end.velocity.x) > 1e-9) {
        fprintf(stderr, "trajectory does not end at rest on r2\n");
        return 1;
    }

    RiskmppiCourse *bad = NULL;
    RiskmppiStatus s = riskmppi_course_load("goal 1 2\n", &bad);
    if (s != RISKMPPI_STATUS_PARSE || bad != NULL || strncmp(riskmppi_last_error(), "parse: ", 7) != 0) {
        fprintf(stderr, "expected a parse error, got %d\n", (int)s);
        return 1;
    }

    printf("version=%s\n", riskmppi_version());
    printf("r2=%.6f %.6f %.6f\n", sol.r2.x, sol.r2.y, sol.r2.z);
    printf("cost=%.6f\n", sol.cost);

    riskmppi_trajectory_free(traj);
    riskmppi_planner_free(planner);
    riskmppi_risk_model_free(model);
    riskmppi_course_free(course);
    return 0;
}
