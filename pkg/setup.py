import setuptools

setuptools.setup(
    name='ExtCert',
    version='0.1.0',
    description='Numerical certificates for the sharp extension inequality on the circle',
    packages=[
        'extcert'
    ],
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.5',
        'matplotlib>=3.1'
    ],
    extras_require={
        'dev': [
            'coverage>=4.5.0',
            'pytest-timeout>=0.3',
            'pytest>=3.4.2'
        ]
    },
    entry_points={
        'console_scripts': [
            'extcert = extcert.cli:main'
        ]
    }
)
