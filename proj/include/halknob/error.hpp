#pragma once

#include <stdexcept>
#include <string>

namespace halknob {

// Error taxonomy, one class per CLI exit code.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad flags or flag combinations.
struct usage_error : error {
    using error::error;
};

// Missing or unreadable/unwritable files.
struct io_error : error {
    using error::error;
};

// Input parses but violates the corpus schema or a data invariant.
struct schema_error : error {
    using error::error;
};

// Model file corrupt, wrong magic/version, or incompatible with the data.
struct model_error : error {
    using error::error;
};

}  // namespace halknob
