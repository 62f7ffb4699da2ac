from .layers import (AdaptiveAvgPool2d, BatchNorm2d, Bottleneck, Context, Conv2d, Dropout,
                     Dropout2d, Flatten, GlobalAvgPool, Linear, MaxPool2d, Module, ReLU,
                     ResidualSEBlock, SEBlock, Sequential)
from .models import (InvalidConfig, ModelGraph, SpatialTooSmall, UnsupportedModel, build_custom_cnn,
                     build_model, build_resnet50, build_vgg16, forward, freeze_for_transfer,
                     kaiming_init, param_count, size_mb)
from .summary import format_summary, summary_rows
