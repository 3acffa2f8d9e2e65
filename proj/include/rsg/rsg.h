/* C interface to the rare-class sample generator training library.
 *
 * Every function returns an rsg_status. On failure rsg_last_error() holds a
 * message for the calling thread until its next failing call. Objects are
 * opaque handles released with their *_free function; strings returned
 * through char** are released with rsg_string_free. */
#ifndef RSG_RSG_H
#define RSG_RSG_H

#include <stddef.h>
#include <stdint.h>

#if defined(RSG_BUILDING_LIBRARY)
#define RSG_API __attribute__((visibility("default")))
#else
#define RSG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rsg_status {
  RSG_OK = 0,
  RSG_ERR_INVALID = 1, /* bad argument or configuration value */
  RSG_ERR_SHAPE = 2,
  RSG_ERR_IO = 3,
  RSG_ERR_FORMAT = 4, /* malformed file contents */
  RSG_ERR_NUMERIC = 5, /* NaN or infinity during training */
  RSG_ERR_INTERNAL = 6
} rsg_status;

typedef struct rsg_config rsg_config;
typedef struct rsg_report rsg_report;

typedef struct rsg_epoch_row {
  size_t epoch;
  double lr;
  double l_cls;
  double l_cesc;
  double l_mv;
  size_t s_new;
  double val_top1;
} rsg_epoch_row;

typedef void (*rsg_epoch_callback)(const rsg_epoch_row* row, void* user);

typedef struct rsg_gradcheck_entry {
  char name[16];
  double max_error;
  size_t coordinates;
} rsg_gradcheck_entry;

RSG_API const char* rsg_version(void);
RSG_API const char* rsg_last_error(void);
RSG_API const char* rsg_status_name(rsg_status status);
RSG_API void rsg_string_free(char* s);

/* Configuration. Unknown JSON keys are rejected with RSG_ERR_INVALID. */
RSG_API rsg_status rsg_config_from_file(const char* path, rsg_config** out);
RSG_API rsg_status rsg_config_from_json(const char* json, rsg_config** out);
/* Sets both the training seed and the dataset seed. */
RSG_API rsg_status rsg_config_set_seed(rsg_config* cfg, uint64_t seed);
RSG_API rsg_status rsg_config_to_json(const rsg_config* cfg, char** out);
RSG_API void rsg_config_free(rsg_config* cfg);

/* Training and evaluation. out_dir may be NULL to keep results in memory;
 * otherwise report.json, epochs.csv, config.json and checkpoint.bin are
 * written there. callback may be NULL. */
RSG_API rsg_status rsg_train(const rsg_config* cfg, const char* out_dir,
                             rsg_epoch_callback callback, void* user, rsg_report** out);
RSG_API rsg_status rsg_evaluate(const rsg_config* cfg, const char* checkpoint,
                                rsg_report** out);

RSG_API rsg_status rsg_report_write(const rsg_report* report, const char* dir);
RSG_API rsg_status rsg_report_to_json(const rsg_report* report, char** out);
RSG_API rsg_status rsg_report_to_csv(const rsg_report* report, char** out);
RSG_API rsg_status rsg_report_top1_error(const rsg_report* report, double* out);
RSG_API rsg_status rsg_report_num_classes(const rsg_report* report, size_t* out);
/* *present is 0 when the class does not occur in the validation split. */
RSG_API rsg_status rsg_report_class_error(const rsg_report* report, size_t cls, double* out,
                                          int* present);
/* Mean accuracy per shot bucket; present[i] is 0 for an empty bucket.
 * out and present hold many, medium, few in that order. */
RSG_API rsg_status rsg_report_shot_split(const rsg_report* report, double out[3],
                                         int present[3]);
RSG_API rsg_status rsg_report_num_epochs(const rsg_report* report, size_t* out);
RSG_API rsg_status rsg_report_epoch(const rsg_report* report, size_t index, rsg_epoch_row* out);
RSG_API void rsg_report_free(rsg_report* report);

/* Finite-difference gradient check of every loss. Writes up to capacity
 * entries and the total number available to *count. */
RSG_API rsg_status rsg_gradcheck(uint64_t seed, rsg_gradcheck_entry* entries, size_t capacity,
                                 size_t* count);
RSG_API double rsg_gradcheck_tolerance(void);

/* Writes train.bin and val.bin dataset caches into out_dir. */
RSG_API rsg_status rsg_datagen(const rsg_config* cfg, const char* out_dir, size_t* train_size,
                               size_t* val_size);

/* Small utilities. */
RSG_API rsg_status rsg_generation_count(double beta, size_t s_freq, size_t s_rare, size_t* out);
RSG_API rsg_status rsg_lr_at(const rsg_config* cfg, size_t epoch, double* out);
/* Parses a CIFAR-10 binary batch file and reports its record count. */
RSG_API rsg_status rsg_cifar_validate(const char* path, size_t* records);

#ifdef __cplusplus
}
#endif

#endif /* RSG_RSG_H */
