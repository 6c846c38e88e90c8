#ifndef SCENE_FACTORY_H
#define SCENE_FACTORY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Navigation actions in the order of their reserved tokens.
typedef enum SfNavAction {
  SF_NAV_ACTION_MOVE_FORWARD = 0,
  SF_NAV_ACTION_TURN_RIGHT = 1,
  SF_NAV_ACTION_TURN_LEFT = 2,
  SF_NAV_ACTION_STOP = 3,
} SfNavAction;

// Result code of every fallible call.
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_UTF8 = 2,
  SF_STATUS_IO = 3,
  SF_STATUS_PARSE = 4,
  SF_STATUS_INVALID_GRAPH = 5,
  SF_STATUS_OUT_OF_RANGE = 6,
  SF_STATUS_INVALID_CONFIG = 7,
  SF_STATUS_PANIC = 8,
} SfStatus;

// Opaque action space handle.
typedef struct SfActionSpace SfActionSpace;

// Opaque scene graph handle.
typedef struct SfSceneGraph SfSceneGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *sf_last_error_message(void);

// Loads a canonical JSON scene graph file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SfStatus sf_scene_graph_load(const char *path, struct SfSceneGraph **out);

// Parses a scene graph from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum SfStatus sf_scene_graph_from_json(const char *json, struct SfSceneGraph **out);

// Number of nodes in the graph.
//
// # Safety
// `graph` must come from this library and not be freed.
enum SfStatus sf_scene_graph_node_count(const struct SfSceneGraph *graph, size_t *out);

// Number of nodes whose normalized label matches `label`.
//
// # Safety
// `graph` must be a live handle, `label` a NUL-terminated string.
enum SfStatus sf_scene_graph_count(const struct SfSceneGraph *graph,
                                   const char *label,
                                   size_t *out);

// # Safety
// `graph` must be a live handle, `label` a NUL-terminated string.
enum SfStatus sf_scene_graph_exists(const struct SfSceneGraph *graph, const char *label, bool *out);

// # Safety
// `graph` must be null or a handle not yet freed.
void sf_scene_graph_free(struct SfSceneGraph *graph);

// The default action space. Never null.
struct SfActionSpace *sf_action_space_default(void);

// Loads an action space from a TOML file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SfStatus sf_action_space_load(const char *path, struct SfActionSpace **out);

// # Safety
// `space` must be null or a handle not yet freed.
void sf_action_space_free(struct SfActionSpace *space);

// Writes the x, y and rotation tokens of a pose to `out_tokens[0..3]`.
//
// # Safety
// `space` must be a live handle and `out_tokens` point to three `u32`s.
enum SfStatus sf_encode_pose(const struct SfActionSpace *space,
                             double x,
                             double y,
                             double rot,
                             uint32_t *out_tokens);

// Decodes x, y and rotation tokens to bin centres.
//
// # Safety
// `tokens` must point to three `u32`s and every out-pointer be valid.
enum SfStatus sf_decode_pose(const struct SfActionSpace *space,
                             const uint32_t *tokens,
                             double *out_x,
                             double *out_y,
                             double *out_rot);

// # Safety
// `space` must be a live handle and `out` a valid pointer.
enum SfStatus sf_encode_nav(const struct SfActionSpace *space,
                            enum SfNavAction action,
                            uint32_t *out);

// # Safety
// `space` must be a live handle and `out` a valid pointer.
enum SfStatus sf_decode_nav(const struct SfActionSpace *space,
                            uint32_t token,
                            enum SfNavAction *out);

// Strict exact match of `pred` against any of `n_refs` references.
//
// # Safety
// `refs` must point to `n_refs` NUL-terminated strings.
enum SfStatus sf_strict_em(const char *pred, const char *const *refs, size_t n_refs, bool *out);

// Refined exact match: equality or whitespace-free containment either way.
//
// # Safety
// `refs` must point to `n_refs` NUL-terminated strings.
enum SfStatus sf_refined_em(const char *pred, const char *const *refs, size_t n_refs, bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENE_FACTORY_H */
