''' LP-update package installer '''
from setuptools import setup

if __name__ == "__main__":
    setup(zip_safe=False)
