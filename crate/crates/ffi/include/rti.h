#ifndef RTI_H
#define RTI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum RtiStatus {
  RTI_STATUS_OK = 0,
  // A required pointer was null.
  RTI_STATUS_NULL_POINTER = 1,
  // Reading the file failed.
  RTI_STATUS_IO = 2,
  // The bytes are not a valid model.
  RTI_STATUS_FORMAT = 3,
  // An argument is out of range (light outside the unit disc, pixel
  // outside the image, non-UTF-8 path).
  RTI_STATUS_INVALID_ARGUMENT = 4,
  // The output buffer is smaller than required.
  RTI_STATUS_BUFFER_TOO_SMALL = 5,
  // An internal error; the library state is unchanged.
  RTI_STATUS_INTERNAL = 6,
} RtiStatus;

// Loaded relighting model.
typedef struct RtiModel RtiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a model file. On success `*out` receives a handle owned by the
// caller.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum RtiStatus rti_model_load(const char *path, struct RtiModel **out);

// Parses a model from memory. On success `*out` receives a handle owned by
// the caller.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum RtiStatus rti_model_from_bytes(const uint8_t *data, size_t len, struct RtiModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from a load function and not be used afterwards.
void rti_model_free(struct RtiModel *model);

// Image size, number of PCA bases and number of Fourier frequencies. Any
// output pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be valid.
enum RtiStatus rti_model_dims(const struct RtiModel *model,
                              uint32_t *width,
                              uint32_t *height,
                              uint32_t *bases,
                              uint32_t *frequencies);

// Renders the whole image for light `(lu, lv)` as interleaved 8-bit RGB,
// row-major. `len` must be at least `3 * width * height`.
//
// # Safety
// `model` must be a live handle and `rgb` must point to `len` writable bytes.
enum RtiStatus rti_model_relight(const struct RtiModel *model,
                                 double lu,
                                 double lv,
                                 uint8_t *rgb,
                                 size_t len);

// Relit colour of one pixel as three floats in `[0, 1]`.
//
// # Safety
// `model` must be a live handle and `rgb` must point to 3 writable floats.
enum RtiStatus rti_model_relight_pixel(const struct RtiModel *model,
                                       uint32_t x,
                                       uint32_t y,
                                       double lu,
                                       double lv,
                                       float *rgb);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`) and returns the full message length
// plus one. Passing a null `buf` only queries the length.
//
// # Safety
// A non-null `buf` must point to `len` writable bytes.
size_t rti_last_error_message(char *buf, size_t len);

// Version of the model format this library reads and writes.
uint16_t rti_format_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTI_H */
