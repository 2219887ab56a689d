"""
Xi-Net Package
==============
Tensor autodiff, 1D shifted-window transformer blocks, the Xi-Net
reconstruction network (time encoder, frequency encoder, fused decoder)
and its checkpoint format.
"""
