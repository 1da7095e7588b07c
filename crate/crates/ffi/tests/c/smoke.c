#include <math.h>
#include <stdio.h>
#include <string.h>

#include "trajalign.h"

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      const char *msg = ta_last_error_message();                     \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,         \
              msg ? msg : "no error");                               \
      return 1;                                                      \
    }                                                                \
  } while (0)

static const char *DOC =
    "{\"steps\": [{\"index\": 0, \"calls\": ["
    "{\"tool\": \"search/web\", \"arguments\": {\"q\": \"paris\"}}]}]}";

int main(void) {
  double cost[] = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  ptrdiff_t cols[3];
  double total = -1;
  CHECK(ta_hungarian(cost, 3, 3, cols, &total) == TA_STATUS_OK);
  CHECK(total == 5.0);
  CHECK(cols[0] == 1 && cols[1] == 0 && cols[2] == 2);

  double scores[] = {0.2, 0.4, 0.6, 0.8};
  double mean = 0;
  CHECK(ta_trimmed_mean(scores, 4, &mean) == TA_STATUS_OK && mean == 0.5);
  CHECK(ta_trimmed_mean(scores, 3, &mean) == TA_STATUS_ARITY);
  CHECK(strstr(ta_last_error_message(), "ArityError") != NULL);

  double s = 0;
  CHECK(ta_parse_boxed_score("\\boxed{7.5}", TA_SCALE_TEN_TO_UNIT, &s) == TA_STATUS_OK);
  CHECK(fabs(s - 0.75) < 1e-15);

  TaTrajectory *t = NULL;
  CHECK(ta_trajectory_parse(DOC, &t) == TA_STATUS_OK);
  CHECK(ta_trajectory_num_calls(t) == 1);
  TaScorer *scorer = NULL;
  CHECK(ta_scorer_new(NULL, &scorer) == TA_STATUS_OK);
  char *json = NULL;
  CHECK(ta_scorer_score(scorer, "c", t, t, &json) == TA_STATUS_OK);
  CHECK(strstr(json, "\"recall\":1.0") != NULL);
  ta_string_free(json);

  TaRegistry *reg = NULL;
  CHECK(ta_registry_parse("[\"search/web\"]", &reg) == TA_STATUS_OK);
  TaOutcome o;
  CHECK(ta_classify_call(reg, "{\"name\":\"ocr/perform\",\"arguments\":{}}", -1, NULL, &o) == TA_STATUS_OK);
  CHECK(o == TA_OUTCOME_UNKNOWN_TOOL);

  ta_registry_free(reg);
  ta_scorer_free(scorer);
  ta_trajectory_free(t);
  puts("ok");
  return 0;
}
