from .dataset import (DatasetIndex, EmptyClass, EmptySplit, NoClasses, batches, build_index,
                      stratified_split, val_count)
from .ppm import UndecodableImage, decode_ppm, encode_ppm, read_image, write_ppm
from .synthetic import IoFailure, gen_synthetic
from .transforms import (IMAGENET_MEAN, IMAGENET_STD, AugmentSpec, color_jitter, denormalize, hflip,
                         load_and_transform, normalize, resize_bilinear, rotate, transform_array)
