package org.minidfs.protocol;

import java.io.IOException;

public interface PacketReader {
    Packet next() throws IOException;
}
