from healthy_translate.datasets.images import (
    ImageCache,
    decode_image,
    denormalize,
    load_image,
    normalize,
    read_mask,
    write_png,
)
from healthy_translate.datasets.manifest import read_manifest, write_manifest
from healthy_translate.datasets.sampling import (
    RecordDataset,
    UnpairedBatchSampler,
    UnpairedDataset,
    load_batch,
    record_loader,
    sample_unpaired_batch,
    unpaired_loader,
)
from healthy_translate.datasets.splits import (
    import_image_folders,
    load_split,
    strip_labels,
)
from healthy_translate.datasets.synthetic import (
    generate_synthetic_benchmark,
    synthesize_sample,
)

__all__ = [
    "ImageCache",
    "RecordDataset",
    "UnpairedBatchSampler",
    "UnpairedDataset",
    "decode_image",
    "denormalize",
    "generate_synthetic_benchmark",
    "import_image_folders",
    "load_batch",
    "load_image",
    "load_split",
    "normalize",
    "read_manifest",
    "read_mask",
    "record_loader",
    "sample_unpaired_batch",
    "strip_labels",
    "synthesize_sample",
    "unpaired_loader",
    "write_manifest",
    "write_png",
]
