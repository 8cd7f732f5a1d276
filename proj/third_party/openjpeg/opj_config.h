/* Minimal public config for building against the system libopenjp2 (2.4.x, soname 7). */
#include <stdint.h>

#define OPJ_HAVE_STDINT_H 1

#define OPJ_VERSION_MAJOR 2
#define OPJ_VERSION_MINOR 4
#define OPJ_VERSION_BUILD 0
