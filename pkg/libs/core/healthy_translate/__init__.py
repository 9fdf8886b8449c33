"""
# healthy-translate

Train a one-directional, mask-based GAN that translates a mixed set of healthy and anomalous images
to healthy images, then detect anomalies from the difference between input and translation.
"""
