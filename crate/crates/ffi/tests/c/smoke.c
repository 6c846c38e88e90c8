#include <stdio.h>
#include "scene_factory.h"

int main(void) {
    const char *json = "{\"scene_id\":\"s\",\"nodes\":[{\"id\":1,\"label\":\"chair\",\"attributes\":[]},"
                       "{\"id\":2,\"label\":\"chairs\",\"attributes\":[]}],\"relations\":[]}";
    SfSceneGraph *g = NULL;
    size_t n = 0;
    if (sf_scene_graph_from_json(json, &g) != SF_STATUS_OK) return 1;
    if (sf_scene_graph_count(g, "chair", &n) != SF_STATUS_OK || n != 2) return 2;
    sf_scene_graph_free(g);

    SfActionSpace *space = sf_action_space_default();
    uint32_t tok = 0;
    SfNavAction back = SF_NAV_ACTION_STOP;
    if (sf_encode_nav(space, SF_NAV_ACTION_MOVE_FORWARD, &tok) != SF_STATUS_OK) return 3;
    if (sf_decode_nav(space, tok, &back) != SF_STATUS_OK || back != SF_NAV_ACTION_MOVE_FORWARD) return 4;
    if (sf_decode_nav(space, 7, &back) != SF_STATUS_OUT_OF_RANGE || sf_last_error_message() == NULL) return 5;
    sf_action_space_free(space);
    printf("<%u>\n", tok);
    return 0;
}
